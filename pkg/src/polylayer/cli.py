"""Command-line front end.

Every command accepts ``--config FILE`` with flat ``key = value`` lines
(``#`` starts a comment); flags given on the command line override the file.
A result JSON written by a previous run is also accepted as a config file: its
``config`` block is read back, so a run can be reproduced exactly.

Results go to ``<out>/<command>-<hash>.{json,csv,svg}`` where ``<hash>`` is
derived from the effective configuration other than ``out``.  Exit status: 0 on success, 2 on an
invalid configuration, 3 on a numerical failure.
"""
import argparse
import hashlib
import json
import math
import os
import sys
import tempfile


from . import spectra, sweeps
from .eigensolve import DEFAULT_SEED, DEFAULT_TOL
from .errors import NumericalError, PolylayerError
from .geometry import ConeSpec, LayerSpec, VGuideSpec, regular_tilt

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("vguide", "cone", "layer", "trihedral", "threshold", "sweep", "demo-nonmonotone")


class ConfigError(ValueError):
    """Invalid configuration; reported with exit status 2."""


# ---------------------------------------------------------------------------
# value parsers
# ---------------------------------------------------------------------------

def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _formats(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [v for v in str(text).replace(" ", "").split(",") if v]


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_grid(text):
    """``start:stop:step`` inclusive of ``stop`` within 1e-12, or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" not in text:
        return _float_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"angle grid must be start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if not step > 0:
        raise ValueError("grid step must be positive")
    n = int(math.floor((stop - start) / step + 1e-12 / step))
    values = [start + i * step for i in range(n + 1)]
    if values and abs(values[-1] - stop) <= 1e-12:
        values[-1] = stop
    return values


# key -> (parser, default, help); the commands using each key are listed below
OPTIONS = {
    "theta": (float, None, "opening (half-)angle or tilt in radians, in (0, pi/2)"),
    "L": (float, 4.0, "half-length of the truncated guide"),
    "r_max": (float, None, "truncation radius (cone: 40, layers: 12)"),
    "h": (float, None, "nominal element size (guide 0.025, cone 0.05, layers 0.1)"),
    "refinements": (int, 0, "uniform refinements applied to the base mesh"),
    "grading": (float, None, "geometric growth factor of cells away from the bend or axis"),
    "core": (float, None, "length of the uniform zone next to the bend or axis"),
    "max_ratio": (float, None, "largest cell size as a multiple of h"),
    "phi_steps": (int, None, "angular cells per half-sector (layers)"),
    "phi_grading": (float, None, "angular spacing ratio toward the edges (layers)"),
    "modes": (_int_list, [0, 1, 2], "Fourier modes, comma separated (cone)"),
    "mode": (int, 0, "Fourier mode of a cone sweep"),
    "faces": (int, 3, "number of faces of a regular layer"),
    "alpha": (float, None, "vertex angle of a regular layer (sets theta when theta is absent)"),
    "azimuths": (_float_list, None, "face-normal azimuths of a non-regular layer"),
    "symmetric": (_bool, True, "solve on the symmetric half-sector of a regular layer"),
    "alphas": (_float_list, None, "three vertex angles of a trihedral angle"),
    "beta": (float, None, "dihedral angle in (0, pi]"),
    "levels": (int, 3, "refinement levels of the threshold study"),
    "family": (str, "vguide", "sweep family: vguide, cone or layer"),
    "thetas": (parse_grid, None, "angle grid start:stop:step or a comma list"),
    "eps": (float, 0.3, "third vertex angle of the unfolding demonstration"),
    "k": (int, 3, "number of eigenpairs computed"),
    "tol": (float, DEFAULT_TOL, "relative residual tolerance"),
    "seed": (int, DEFAULT_SEED, "seed of the eigensolver start vector"),
    "workers": (int, 1, "parallel angle solves in a sweep"),
    "out": (str, ".", "output directory"),
    "formats": (_formats, None, "output formats, comma separated (json, csv, svg)"),
    "timing": (_bool, False, "include wall-clock time in the JSON (breaks bitwise reproducibility)"),
}

_MESH = ["h", "refinements", "grading", "core", "max_ratio"]
_SOLVER = ["k", "tol", "seed", "out", "formats", "timing"]
_LAYER = ["faces", "alpha", "azimuths", "symmetric", "r_max", "phi_steps", "phi_grading"]
COMMAND_KEYS = {
    "vguide": ["theta", "L"] + _MESH + _SOLVER,
    "cone": ["theta", "r_max", "modes"] + _MESH + _SOLVER,
    "layer": ["theta"] + _LAYER + _MESH + _SOLVER,
    "trihedral": ["alphas", "r_max", "phi_steps", "phi_grading"] + _MESH + _SOLVER,
    "threshold": ["beta", "levels", "h", "L", "out", "formats", "timing"],
    "sweep": ["family", "thetas", "L", "r_max", "mode", "workers"] + _LAYER + _MESH + _SOLVER,
    "demo-nonmonotone": ["eps", "r_max", "phi_steps", "phi_grading"] + _MESH + _SOLVER,
}
COMMAND_KEYS = {cmd: list(dict.fromkeys(keys)) for cmd, keys in COMMAND_KEYS.items()}
DEFAULT_FORMATS = {"sweep": ["json", "csv", "svg"]}
ALLOWED_FORMATS = {"sweep": {"json", "csv", "svg"}}


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="polylayer",
        description="Eigenvalues below the essential spectrum of bent guides and layers.",
        epilog="Every flag is also a config key (dashes become underscores).",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "vguide": "broken planar guide",
        "cone": "conical layer (Fourier modes)",
        "layer": "polyhedral layer from face azimuths or a regular vertex angle",
        "trihedral": "layer around a trihedral angle given by its vertex angles",
        "threshold": "essential-spectrum threshold for a dihedral angle",
        "sweep": "angle sweep on one mesh with monotonicity verdicts",
        "demo-nonmonotone": "two trihedral layers, one unfolding the other",
    }
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=helps[cmd], description=helps[cmd])
        p.add_argument("--config", help="flat key = value file, or a previous result JSON")
        for key in COMMAND_KEYS[cmd]:
            parser_fn, default, text = OPTIONS[key]
            shown = "" if default is None else f" (default {default})"
            p.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, metavar=key.upper(),
                           help=text + shown)
    return parser


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def read_config_file(path):
    """Raw key/value pairs from a ``key = value`` file or a result JSON."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        data = data.get("config", data)
        return {k: v for k, v in data.items() if k != "command"}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(command, file_values, flag_values):
    """Typed effective configuration; flags win over the file, unknown keys are rejected."""
    allowed = COMMAND_KEYS[command]
    raw = dict(file_values)
    raw.update(flag_values)
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    cfg = {}
    for key in allowed:
        parser_fn, default, _ = OPTIONS[key]
        if key in raw and raw[key] is not None:
            try:
                cfg[key] = parser_fn(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            cfg[key] = default
    if "formats" in cfg and cfg["formats"] is None:
        cfg["formats"] = DEFAULT_FORMATS.get(command, ["json"])
    validate(command, cfg)
    return cfg


def _require(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(f"{key} is required")


def _positive(cfg, *keys):
    for key in keys:
        if cfg.get(key) is not None and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive, got {cfg[key]!r}")


def _check_theta(value, name="theta"):
    if not 0 < value < math.pi / 2:
        raise ConfigError(f"{name} must lie in (0, π/2), got {value!r}")


def validate(command, cfg):
    """Range checks done before any computation."""
    _positive(cfg, "h", "L", "r_max", "tol", "k", "phi_steps", "levels", "workers")
    for key in ("grading", "max_ratio", "phi_grading"):
        if cfg.get(key) is not None and cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {cfg[key]!r}")
    if cfg.get("core") is not None and cfg["core"] < 0:
        raise ConfigError(f"core must be >= 0, got {cfg['core']!r}")
    if cfg.get("refinements", 0) < 0:
        raise ConfigError("refinements must be >= 0")
    if cfg.get("r_max") is not None and not cfg["r_max"] > 1:
        raise ConfigError(f"r_max must exceed 1, got {cfg['r_max']!r}")
    allowed_formats = ALLOWED_FORMATS.get(command, {"json"})
    bad = sorted(set(cfg.get("formats") or []) - allowed_formats)
    if bad:
        raise ConfigError(f"formats {bad} not available for {command} (choose from {sorted(allowed_formats)})")
    if command in ("vguide", "cone"):
        _require(cfg, "theta")
        _check_theta(cfg["theta"])
    if command == "cone" and any(m < 0 for m in cfg["modes"]):
        raise ConfigError("modes must be nonnegative")
    if command == "layer" or (command == "sweep" and cfg["family"] == "layer"):
        if cfg["azimuths"] is None and cfg["faces"] < 3:
            raise ConfigError("faces must be at least 3")
        if command == "layer":
            if cfg["theta"] is None and cfg["alpha"] is None:
                raise ConfigError("theta or alpha is required")
            if cfg["theta"] is not None:
                _check_theta(cfg["theta"])
            elif not 0 < cfg["alpha"] < 2 * math.pi / cfg["faces"]:
                raise ConfigError(f"alpha must lie in (0, 2π/faces), got {cfg['alpha']!r}")
    if command == "trihedral":
        _require(cfg, "alphas")
        if len(cfg["alphas"]) != 3:
            raise ConfigError("alphas must list three vertex angles")
    if command == "threshold":
        _require(cfg, "beta")
        if not 0 < cfg["beta"] <= math.pi:
            raise ConfigError(f"beta must lie in (0, π], got {cfg['beta']!r}")
        if cfg["levels"] < 3:
            raise ConfigError("levels must be at least 3")
    if command == "sweep":
        if cfg["family"] not in ("vguide", "cone", "layer"):
            raise ConfigError(f"family must be vguide, cone or layer, got {cfg['family']!r}")
        _require(cfg, "thetas")
        if not cfg["thetas"]:
            raise ConfigError("thetas is empty")
        for t in cfg["thetas"]:
            _check_theta(t, "thetas")
        if any(b <= a for a, b in zip(cfg["thetas"], cfg["thetas"][1:])):
            raise ConfigError("thetas must be strictly increasing")
    if command == "demo-nonmonotone" and not 0 < cfg["eps"] <= math.pi / 2:
        raise ConfigError(f"eps must lie in (0, π/2], got {cfg['eps']!r}")


def _recorded(cfg):
    # the output directory does not change the result, so it is not recorded
    return spectra._plain({k: v for k, v in cfg.items() if k != "out"})


def config_hash(command, cfg):
    blob = json.dumps({"command": command, "config": _recorded(cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _mesh_options(cfg, keys):
    return {k: cfg[k] for k in keys if cfg.get(k) is not None}


def _solver(cfg):
    return dict(k=cfg["k"], tol=cfg["tol"], seed=cfg["seed"])


def _layer_spec(cfg):
    r_max = cfg["r_max"] if cfg.get("r_max") is not None else 12.0
    if cfg["azimuths"] is not None:
        theta = cfg["theta"] if cfg.get("theta") is not None else math.pi / 4
        return LayerSpec(theta, tuple(cfg["azimuths"]), r_max, False)
    theta = cfg.get("theta")
    if theta is None and cfg.get("alpha") is not None:
        theta = regular_tilt(cfg["alpha"], cfg["faces"])
    if theta is None:
        theta = math.pi / 4
    return LayerSpec.regular(cfg["faces"], theta, r_max, symmetry_subspace=cfg["symmetric"])


def _with_h(cfg, default):
    return cfg["h"] if cfg.get("h") is not None else default


def execute(command, cfg):
    """Run one command; returns ``(payload dict, summary dict, extra artifacts)``."""
    _2d = ["grading", "core", "max_ratio"]
    _3d = _2d + ["phi_steps", "phi_grading"]
    if command == "vguide":
        s = spectra.solve_vguide(cfg["theta"], cfg["L"], _with_h(cfg, 0.025),
                                 refinements=cfg["refinements"],
                                 mesh_options=_mesh_options(cfg, _2d), **_solver(cfg))
        return s.to_dict(cfg["timing"]), _summary(s), {}
    if command == "cone":
        r_max = cfg["r_max"] if cfg["r_max"] is not None else 40.0
        s = spectra.solve_cone(cfg["theta"], r_max, _with_h(cfg, 0.05), tuple(cfg["modes"]),
                               refinements=cfg["refinements"],
                               mesh_options=_mesh_options(cfg, _2d), **_solver(cfg))
        return s.to_dict(cfg["timing"]), _summary(s), {}
    if command == "layer":
        s = spectra.solve_layer(_layer_spec(cfg), _with_h(cfg, 0.1), refinements=cfg["refinements"],
                                mesh_options=_mesh_options(cfg, _3d), **_solver(cfg))
        return s.to_dict(cfg["timing"]), _summary(s), {}
    if command == "trihedral":
        r_max = cfg["r_max"] if cfg["r_max"] is not None else 12.0
        s = spectra.solve_trihedral(cfg["alphas"], _with_h(cfg, 0.1), r_max=r_max,
                                    refinements=cfg["refinements"],
                                    mesh_options=_mesh_options(cfg, _3d), **_solver(cfg))
        return s.to_dict(cfg["timing"]), _summary(s), {}
    if command == "threshold":
        beta = cfg["beta"]
        h = _with_h(cfg, spectra.THRESHOLD_H)
        if beta >= math.pi:
            payload = {"beta": beta, "threshold": spectra.PI2, "report": None}
        else:
            rep = spectra.threshold_report(beta, h=h, L=cfg["L"], levels=cfg["levels"])
            value = rep.estimate if rep.estimate is not None else rep.values[-1]
            payload = {"beta": beta, "threshold": min(value, spectra.PI2), "report": rep.to_dict()}
        payload["schema_version"] = spectra.SCHEMA_VERSION
        return payload, {"threshold": payload["threshold"]}, {}
    if command == "sweep":
        disc = {"h": _with_h(cfg, {"vguide": 0.025, "cone": 0.05, "layer": 0.1}[cfg["family"]]),
                "refinements": cfg["refinements"]}
        if cfg["family"] == "vguide":
            family, keys = VGuideSpec(math.pi / 2, cfg["L"]), _2d
        elif cfg["family"] == "cone":
            r_max = cfg["r_max"] if cfg["r_max"] is not None else 40.0
            family, keys = ConeSpec(math.pi / 2, r_max), _2d
            disc["mode"] = cfg["mode"]
        else:
            family, keys = _layer_spec(cfg), _3d
        disc["mesh_options"] = _mesh_options(cfg, keys)
        res = sweeps.sweep_angle(family, cfg["thetas"], disc, workers=cfg["workers"], **_solver(cfg))
        extra = {"csv": res.to_csv(), "svg": res.to_svg()}
        first = res.points[0]
        summary = {"thetas": len(res.thetas), "monotone": res.monotone, "counts": res.counts,
                   "threshold": first.threshold, "count": first.count, "lambda1": float(first.eigenvalues[0])}
        return res.to_dict(), summary, extra
    if command == "demo-nonmonotone":
        r_max = cfg["r_max"] if cfg["r_max"] is not None else 12.0
        rep = sweeps.nonmonotone_demo(cfg["eps"], _with_h(cfg, 0.1), r_max, cfg["refinements"],
                                      mesh_options=_mesh_options(cfg, _3d), **_solver(cfg))
        payload = {k: v for k, v in rep.items() if k != "spectra"}
        payload["spectra"] = [s.to_dict(cfg["timing"]) for s in rep["spectra"]]
        payload["schema_version"] = spectra.SCHEMA_VERSION
        summary = {"counts": rep["counts"], "thresholds": rep["thresholds"], "expected": rep["expected"]}
        return spectra._plain(payload), summary, {}
    raise ConfigError(f"unknown command {command!r}")


def _summary(s):
    return {"threshold": s.threshold, "count": s.count, "lambda1": s.lambda1}


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_summary(command, summary, paths):
    parts = [command]
    for key in ("threshold", "count", "lambda1", "counts", "thresholds", "monotone", "expected"):
        if key in summary:
            v = summary[key]
            if isinstance(v, float):
                v = f"{v:.10g}"
            elif isinstance(v, list):
                v = ",".join(f"{x:.10g}" if isinstance(x, float) else str(x) for x in v)
            parts.append(f"{key}={v}")
    if paths:
        parts.append("-> " + " ".join(paths))
    return " ".join(parts)


def run(command, cfg):
    """Execute a validated configuration, write artifacts, return ``(status, summary line)``."""
    payload, summary, extra = execute(command, cfg)
    payload = dict(payload)
    payload["command"] = command
    payload["config"] = _recorded(cfg)
    stem = os.path.join(cfg["out"], f"{command}-{config_hash(command, cfg)}")
    paths = []
    for fmt in cfg["formats"]:
        path = f"{stem}.{fmt}"
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n" if fmt == "json" else extra[fmt]
        write_atomic(path, text)
        paths.append(path)
    return EXIT_OK, _format_summary(command, summary, paths)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_values, flags)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status, line = run(args.command, cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PolylayerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(line)
    return status


if __name__ == "__main__":
    sys.exit(main())
