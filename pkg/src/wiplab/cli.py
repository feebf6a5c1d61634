"""Command-line front end: criterion tables, validation suites and raw path export."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import shlex
import sys
from dataclasses import dataclass

import numpy as np

from . import criteria as crit
from . import estimator as est
from .errors import ConfigError, InvalidFamilyError, UnknownPresetError, ZeroVarianceError
from .family import PRESET_NAMES, SequenceFamily, make_preset
from .realization import OmegaPoint, StreamSigns, indicator_Ak, max_symmdiff, measure_Ak, split_key

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

VALIDATE_COLUMNS = (
    "suite", "statistic", "n", "samples", "estimate", "stderr", "oracle", "tolerance", "pass",
    "seed", "k_max", "note", "command",
)
CRITERIA_COLUMNS = ("criterion", "holds", "strength", "method", "expected", "match")


@dataclass
class RunConfig:
    family: SequenceFamily
    preset: str | None = None
    config_path: str | None = None
    variant: bool = False
    k_max: int = 6
    ns: tuple = (1024,)
    samples: int = 10000
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    workers: int = 1

    def command(self, sub: str, **overrides) -> str:
        parts = ["wiplab", sub]
        if self.preset:
            parts += ["--preset", self.preset]
        else:
            parts += ["--config", self.config_path]
        if self.variant:
            parts.append("--variant")
        opts = {"kmax": self.k_max, "n": ",".join(map(str, self.ns)), "samples": self.samples, "seed": self.seed}
        opts.update(overrides)
        for key, value in opts.items():
            parts += [f"--{key}", str(value)]
        return shlex.join(parts)


def _parse_ns(text: str) -> tuple:
    try:
        ns = tuple(int(float(x)) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError("n", f"expected a comma-separated list of integers, got {text!r}") from None
    if not ns or min(ns) < 1:
        raise ConfigError("n", "every horizon must be >= 1")
    return ns


def _load_family(args) -> tuple[SequenceFamily, int | None]:
    if (args.preset is None) == (args.config is None):
        raise ConfigError("preset/config", "give exactly one of --preset or --config")
    if args.preset is not None:
        try:
            return make_preset(args.preset), None
        except UnknownPresetError as exc:
            raise ConfigError("preset", str(exc)) from None
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
    for key in ("n_seq", "theta"):
        if key not in data:
            raise ConfigError(key, "missing from config")
    try:
        family = SequenceFamily.from_dict(data)
    except InvalidFamilyError as exc:
        name = "lambda" if "lambda" in str(exc) else "family"
        raise ConfigError(name, str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("family", f"malformed family: {exc}") from None
    return family, data.get("k_max")


def build_config(args) -> RunConfig:
    family, file_kmax = _load_family(args)
    if args.variant and not family.variant:
        family = family.with_(variant=True, horizon_rule="double")
    k_max = args.kmax if args.kmax is not None else (file_kmax or 6)
    if not 1 <= int(k_max) <= 64:
        raise ConfigError("k_max", f"must be in [1, 64], got {k_max}")
    samples = int(float(args.samples))
    if samples < 100:
        raise ConfigError("samples", f"must be >= 100, got {samples}")
    if args.format not in ("csv", "json"):
        raise ConfigError("format", f"expected csv or json, got {args.format!r}")
    return RunConfig(
        family=family, preset=args.preset, config_path=args.config, variant=family.variant,
        k_max=int(k_max), ns=_parse_ns(args.n), samples=samples, seed=int(args.seed),
        out=args.out, fmt=args.format, workers=max(1, int(args.workers)),
    )


# -- criteria -----------------------------------------------------------------------


def run_criteria(config: RunConfig) -> tuple[list[dict], bool]:
    rows = crit.criteria_table(config.family, config.variant, strict=False)
    out = []
    for r in rows:
        out.append({
            "criterion": r.criterion, "holds": r.holds, "strength": r.strength, "method": r.method,
            "expected": r.expected, "match": r.match,
        })
    return out, all(r.match is not False for r in rows)


# -- validation ----------------------------------------------------------------------


def _row(config, suite, statistic, n, samples, estimate, stderr, oracle, tolerance, ok, note="", cmd=None):
    estimate, stderr, oracle, tolerance = (
        v.item() if isinstance(v, np.generic) else v for v in (estimate, stderr, oracle, tolerance)
    )
    return {
        "suite": suite, "statistic": statistic, "n": n, "samples": samples,
        "estimate": estimate, "stderr": stderr, "oracle": oracle, "tolerance": tolerance,
        "pass": bool(ok), "seed": config.seed, "k_max": config.k_max, "note": note,
        "command": config.command("validate", **(cmd or {})),
    }


def cond_sn_band(spec, n: int) -> tuple[float, float]:
    """Band for ``E|sum_{i<=n} E(f o T^i | F_0)|**2`` in the truncated model.

    With frozen sets the value is ``sum theta^2 M_k(n) mu(A_k)`` where
    ``M_k(n)`` is ``min(n, N_k)`` (variant: the exact second moment of the
    lagged block), so it lies between ``a S_K(n)`` and ``S_K(n)``.  Moving
    sets perturb the L2 norm by at most ``r = sum theta min(n, H) c sqrt(eps)``
    with ``c = 1`` (variant: ``N_k``, the sup of one conditional term).
    """
    if spec.is_zero:
        return 0.0, 0.0
    sets = spec.sets
    s_k = 0.0
    rem = 0.0
    for t, lag, r, h, e in zip(spec.thetas, spec.lags, sets.rho, sets.horizons, sets.eps):
        if spec.variant:
            s_k += t * t * est.bnk_second_moment(n, lag) * float(r)
            rem += t * min(n, h) * lag * math.sqrt(float(e))
        else:
            s_k += t * t * min(n, lag) * float(r)
            rem += t * min(n, h) * math.sqrt(float(e))
    low = max(0.0, math.sqrt(float(sets.a) * s_k) - rem) ** 2
    return low, (math.sqrt(s_k) + rem) ** 2


def _points(config, spec, count, salt):
    for i in range(count):
        stream = StreamSigns(split_key(config.seed + salt, i))
        yield OmegaPoint(stream, stream.coordinates(spec.k_max))


def _suite_oracle(config, spec):
    rows = []
    e = est.mc_estimate("NormF2", spec, 1, config.samples, config.seed, config.workers)
    exact = est.norm_f2_exact(spec)
    tol = 3 * e.stderr
    rows.append(_row(config, "oracle", "NormF2", 1, e.samples, e.mean, e.stderr, exact, tol,
                     abs(e.mean - exact) <= tol, "exact truncated sum of theta^2 mu(A_k)"))
    for n in config.ns:
        e = est.mc_estimate("CondSnL2", spec, n, config.samples, config.seed, config.workers)
        low, high = cond_sn_band(spec, n)
        tol = 3 * e.stderr
        ok = low - tol <= e.mean <= high + tol
        rows.append(_row(config, "oracle", "CondSnL2", n, e.samples, e.mean, e.stderr,
                         f"[{low:.6g}, {high:.6g}]", tol, ok, "main-term band plus moving-set remainder",
                         cmd={"n": n}))
    return rows


def _suite_invariant(config, spec):
    rows = []
    count = min(config.samples, 2000)
    worst = 0.0
    products = []
    overlaps = 0
    for p in _points(config, spec, count, 1):
        g = est.transfer_orbit(p, spec, 1)
        f = est.eval_f(p, spec)
        m = f - g[0] + g[1]
        worst = max(worst, abs(f - (m + g[0] - g[1])))
        # h = e_0 and h = e_{-1} are F_0-measurable test functions.
        products.append((m * p.sign(0), m * p.sign(-1)))
        if not spec.control and spec.k_max:
            overlaps += sum(indicator_Ak(p, k, spec.sets) for k in range(1, spec.k_max + 1)) > 1
    rows.append(_row(config, "invariant", "DecompositionIdentity", 1, count, worst, 0.0, 0.0, 1e-9,
                     worst <= 1e-9, "f = m + g - g o T pointwise"))
    arr = np.array(products)
    for col, name in enumerate(("MartOrth[e_0]", "MartOrth[e_-1]")):
        mean = float(arr[:, col].mean())
        se = float(arr[:, col].std(ddof=1) / math.sqrt(count))
        rows.append(_row(config, "invariant", name, 1, count, mean, se, 0.0, 3 * se,
                         abs(mean) <= 3 * se, "E(m h) = 0 for F_0-measurable h"))
    rows.append(_row(config, "invariant", "Disjointness", 0, count, overlaps, 0.0, 0, 0, overlaps == 0,
                     "points in two A_k"))
    return rows


def _suite_sets(config, spec):
    if spec.control or spec.k_max == 0:
        return []
    sets = spec.sets
    worst = 0.0
    bounds_ok = True
    a = sets.a
    for k in range(1, min(spec.k_max, 8) + 1):
        ratio = max_symmdiff(sets, k) / sets.eps[k - 1]
        worst = max(worst, float(ratio))
        mu = measure_Ak(sets, k)
        bounds_ok &= a * sets.rho[k - 1] <= mu <= sets.rho[k - 1]
    return [
        _row(config, "sets", "SymmDiffOverEps", 0, 0, worst, 0.0, 1.0, 1.0, worst <= 1.0,
             "max over i, j <= H_k of mu(T^-i A_k  delta  T^-j A_k) / eps_k"),
        _row(config, "sets", "MeasureBounds", 0, 0, float(bounds_ok), 0.0, 1.0, 0.0, bounds_ok,
             "a rho_k <= mu(A_k) <= rho_k"),
    ]


def _suite_clt(config, spec, threshold=0.05):
    n = max(256, max(config.ns))
    samples = max(1000, min(config.samples, 4000))
    note = ""
    for strike, seed in enumerate((config.seed, config.seed + 1)):
        try:
            res = est.empirical_clt(spec, n, samples, seed, config.workers)
        except ZeroVarianceError as exc:
            ok = spec.is_zero
            return [_row(config, "clt", "KS", n, samples, 0.0, 0.0, "zero-variance", threshold, ok,
                         f"expected error: {exc}" if ok else str(exc), cmd={"n": n})]
        if res.ks_distance < threshold:
            break
        note = f"strike {strike + 1}: ks={res.ks_distance:.4f} (seed {seed})"
    ok = res.ks_distance < threshold
    return [_row(config, "clt", "KS", n, samples, res.ks_distance, 0.0, 0.0, threshold, ok,
                 note or f"sigma_hat={res.sigma_hat:.6g}", cmd={"n": n, "seed": res.seed})]


def _suite_transfer(config, spec, slack=0.10):
    ns = sorted(config.ns)
    samples = min(config.samples, 4000)
    meds = [est.max_transfer_ratio(spec, n, samples, config.seed, config.workers) for n in ns]
    rows = []
    ok = all(b.median <= a.median * (1 + slack) + 1e-15 for a, b in zip(meds, meds[1:]))
    for r in meds:
        rows.append(_row(config, "transfer", "MaxTransferRatio", r.n, r.samples, r.median, 0.0,
                         "nonincreasing", slack, ok, f"q90={r.q90:.6g}", cmd={"n": r.n}))
    return rows


def _suite_moments(config, spec):
    rows = []
    for stat in ("TransferIncL2", "MartL2"):
        e = est.mc_estimate(stat, spec, 1, config.samples, config.seed, config.workers)
        rows.append(_row(config, "moments", stat, 1, e.samples, e.mean, e.stderr, "", "",
                         math.isfinite(e.mean), "reported; L2 norm of the coboundary pieces"))
    return rows


SUITES = ("oracle", "invariant", "sets", "clt", "transfer", "moments")


def run_validate(config: RunConfig, suites=SUITES) -> tuple[list[dict], bool]:
    spec = est.build_model(config.family, config.k_max)
    runners = {
        "oracle": _suite_oracle, "invariant": _suite_invariant, "sets": _suite_sets,
        "clt": _suite_clt, "transfer": _suite_transfer, "moments": _suite_moments,
    }
    rows = []
    for name in suites:
        if name == "transfer" and spec.horizon_rule != "ip_extended" and not spec.is_zero:
            continue
        try:
            rows.extend(runners[name](config, spec))
        except Exception as exc:  # noqa: BLE001 - a failing suite becomes a failing row
            rows.append(_row(config, name, "error", "", "", "", "", "", "", False,
                             f"{type(exc).__name__}: {exc}"))
    return rows, all(r["pass"] for r in rows)


def run_simulate(config: RunConfig) -> list[dict]:
    """Partial-sum paths ``S_t``, ``t = 1..n``, one per replicate."""
    spec = est.build_model(config.family, config.k_max)
    n = max(config.ns)
    rows = []
    for i in range(config.samples):
        stream = StreamSigns(split_key(config.seed, i))
        point = OmegaPoint(stream, stream.coordinates(spec.k_max))
        path = np.cumsum(est.orbit_values(point, spec, n))
        rows.extend({"sample": i, "t": t + 1, "S": float(s)} for t, s in enumerate(path))
    return rows


# -- output -------------------------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(rows: list[dict], fmt: str, columns, meta: dict) -> str:
    if fmt == "json":
        return json.dumps({**meta, "rows": rows}, indent=2, sort_keys=True, default=str) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wiplab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("criteria", "decide L2, MC_L1, projective and Maxwell-Woodroffe criteria"),
        ("validate", "run Monte Carlo validation suites"),
        ("simulate", "export raw partial-sum paths"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--preset", help=f"one of {', '.join(PRESET_NAMES)}")
        p.add_argument("--config", help="JSON family file")
        p.add_argument("--variant", action="store_true", help="use the variant pattern function")
        p.add_argument("--kmax", type=int, default=None)
        p.add_argument("--n", default="1024", help="comma-separated horizons")
        p.add_argument("--samples", default="10000")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--format", default="csv", choices=("csv", "json"))
        p.add_argument("--workers", type=int, default=1)
        if name == "validate":
            p.add_argument("--suites", default=",".join(SUITES))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"command": config.command(args.command), "family": config.family.to_dict(config.k_max)}
    if args.command == "criteria":
        rows, ok = run_criteria(config)
        _emit(render(rows, config.fmt, CRITERIA_COLUMNS, meta), config.out)
        return EXIT_OK if ok else EXIT_FAIL
    if args.command == "validate":
        suites = tuple(s for s in args.suites.split(",") if s)
        unknown = set(suites) - set(SUITES)
        if unknown:
            print(f"config error: suites: unknown {sorted(unknown)}; expected {SUITES}", file=sys.stderr)
            return EXIT_CONFIG
        rows, ok = run_validate(config, suites)
        _emit(render(rows, config.fmt, VALIDATE_COLUMNS, meta), config.out)
        return EXIT_OK if ok else EXIT_FAIL
    rows = run_simulate(config)
    _emit(render(rows, config.fmt, ("sample", "t", "S"), meta), config.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
