"""Command-line front end.

Subcommands: ``run`` (fuzz campaign), ``replay`` (reproduce a recorded
crash), ``detect fit|score|eval`` (anomaly detector), ``stats`` (summarize a
run directory). Human-readable progress goes to stderr; machine-readable
artifacts go to files (and small query results to stdout), so stdout stays
pipeable.

Exit codes: 0 success, 1 configuration/usage error, 2 environment or bridge
failure (and, for replay, non-reproduction).
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, artifacts, detector
from .bridge import BridgeEnvironment, connect_stdio, connect_tcp
from .environments import available, make_environment
from .errors import ConfigError, MdpFuzzError
from .fuzzer import Campaign, CampaignConfig, CrashRecord
from .mdp import Environment


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- environment construction ---------------------------------------------------

def _build_env(env_name: str, overrides: dict, bridge_cmd: str | None,
               bridge_addr: str | None, timeout: float) -> Environment:
    if env_name == "bridge":
        if bridge_cmd and bridge_addr:
            raise ConfigError("give either --bridge-cmd or --bridge-addr")
        if bridge_cmd:
            return BridgeEnvironment(connect_stdio(bridge_cmd,
                                                   timeout=timeout))
        if bridge_addr:
            return BridgeEnvironment(connect_tcp(bridge_addr,
                                                 timeout=timeout))
        raise ConfigError(
            "--env bridge requires --bridge-cmd or --bridge-addr")
    if bridge_cmd or bridge_addr:
        raise ConfigError(
            "--bridge-cmd/--bridge-addr only apply to --env bridge")
    return make_environment(env_name, overrides)


def _resolve_out_dir(out: str | None, env_name: str, rng_seed: int) -> Path:
    root = Path(os.environ.get("MDPFUZZ_OUT", "."))
    name = out if out else f"{env_name}-seed{rng_seed}"
    path = Path(name)
    return path if path.is_absolute() else root / path


# --- run -------------------------------------------------------------------------

_CONFIG_FLAG_MAP = {
    # CLI dest -> CampaignConfig field
    "env": "env_name",
    "corpus_size": "corpus_size",
    "horizon": "horizon",
    "budget_iters": "budget_iterations",
    "budget_seconds": "budget_seconds",
    "k": "n_components",
    "tau": "tau",
    "gamma": "gamma",
    "beta": "beta",
    "delta_sens": "delta_sens",
    "rng_seed": "rng_seed",
    "lanes": "lanes",
    "corpus_capacity": "corpus_capacity",
}


def _assemble_config(args: argparse.Namespace) -> CampaignConfig:
    """Precedence: CLI flags > config file > built-in defaults."""
    merged: dict = {}
    if args.config:
        try:
            merged.update(artifacts.read_json(args.config))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
    for dest, field in _CONFIG_FLAG_MAP.items():
        value = getattr(args, dest)
        if value is not None:
            merged[field] = value
    if args.no_density_guide:
        merged["density_guidance"] = False
    if args.unnormalized_responsibilities:
        merged["responsibility_normalization"] = False
    if "env_name" not in merged:
        raise ConfigError("--env is required (or env_name in --config)")
    config = CampaignConfig.from_dict(merged)
    config.validate()
    return config


def _write_manifest(out: Path, campaign: Campaign) -> None:
    spec = campaign.env.spec
    hasher = hashlib.sha256()
    hasher.update(spec.name.encode())
    hasher.update(np.ascontiguousarray(spec.bounds).tobytes())
    hasher.update(str(spec.default_horizon).encode())
    hasher.update(artifacts.dumps_compact(
        campaign.config.env_overrides).encode())
    artifacts.write_json(out / "manifest.json", {
        "tool_version": __version__,
        "env": spec.name,
        "env_constants_hash": hasher.hexdigest(),
        "rng_seed": campaign.config.rng_seed,
        "started_at": datetime.datetime.now(datetime.timezone.utc)
                      .isoformat(timespec="seconds"),
        "config": campaign.resolved_config(),
    })


def cmd_run(args: argparse.Namespace) -> int:
    if args.resume:
        if not args.out:
            raise ConfigError("--resume requires --out")
        out = _resolve_out_dir(args.out, "", 0)
        stored = artifacts.read_json(out / "config.json")
        env = _build_env(stored["env_name"], stored.get("env_overrides", {}),
                         args.bridge_cmd, args.bridge_addr, args.timeout)
        campaign = Campaign.resume(out, env)
        _progress(f"[run] resuming at iteration {campaign.iteration} "
                  f"({len(campaign.crashes)} crashes so far)")
    else:
        config = _assemble_config(args)
        env = _build_env(config.env_name, config.env_overrides,
                         args.bridge_cmd, args.bridge_addr, args.timeout)
        campaign = Campaign(config, env)
        out = _resolve_out_dir(args.out, config.env_name, config.rng_seed)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, campaign)
        _progress(f"[run] env={env.spec.name} horizon={campaign.horizon} "
                  f"corpus={config.corpus_size} out={out}")
        campaign.initialize()
        _progress(f"[run] corpus initialized: {len(campaign.corpus)} seeds, "
                  f"mean energy {campaign.corpus.mean_energy():.4g}")

    def checkpoint(c: Campaign) -> None:
        c.save(out)
        _progress(f"[run] iter={c.iteration} mutations={c.mutations} "
                  f"crashes={len(c.crashes)} corpus={len(c.corpus)}")

    try:
        campaign.run(checkpoint=checkpoint)
    finally:
        closer = getattr(campaign.env, "close", None)
        if closer:
            closer()
    _progress(f"[run] done: {len(campaign.crashes)} crashes in "
              f"{campaign.iteration} iterations -> {out}")
    return 0


# --- replay ----------------------------------------------------------------------

def cmd_replay(args: argparse.Namespace) -> int:
    records = artifacts.read_jsonl(args.crash_file)
    if not 0 <= args.index < len(records):
        raise ConfigError(
            f"--index {args.index} out of range ({len(records)} records)")
    record = CrashRecord.from_dict(records[args.index])
    overrides = {}
    if args.config:
        overrides = artifacts.read_json(args.config).get("env_overrides", {})
    env = _build_env(args.env, overrides, args.bridge_cmd, args.bridge_addr,
                     args.timeout)
    if record.env != env.spec.name:
        raise ConfigError(
            f"record was produced on '{record.env}', not '{env.spec.name}'")
    result = env.rollout(env.policy(), record.s0, record.horizon,
                         record.rng_seed)
    if result.crashed and result.crash_step == record.crash_step:
        _progress(f"[replay] reproduced crash at step {record.crash_step}")
        return 0
    if result.crashed:
        _progress(f"[replay] diverged: crash at step {result.crash_step}, "
                  f"recorded {record.crash_step}")
    else:
        _progress(f"[replay] diverged: no crash within horizon "
                  f"{record.horizon} (recorded step {record.crash_step})")
    return 2


# --- detector --------------------------------------------------------------------

def cmd_detect_fit(args: argparse.Namespace) -> int:
    points, flags = detector.read_labeled_csv(args.input)
    bandwidth = None if args.bandwidth in (None, "auto") \
        else float(args.bandwidth)
    model = detector.fit_detector(points, flags, bandwidth=bandwidth)
    detector.save_model(model, args.model)
    _progress(f"[detect] fit {model.centers.shape[0]} centers "
              f"({model.normal_center_ids.size} normal), "
              f"bandwidth {model.bandwidth:.6g} -> {args.model}")
    return 0


def cmd_detect_score(args: argparse.Namespace) -> int:
    model = detector.load_model(args.model)
    points, _ = detector.read_labeled_csv(args.input)
    scores = detector.abnormality_score(model, points)
    lines = ["score"] + [repr(float(s)) for s in scores]
    if args.output:
        artifacts.atomic_write_text(args.output, "\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return 0


def cmd_detect_eval(args: argparse.Namespace) -> int:
    model = detector.load_model(args.model)
    points, flags = detector.read_labeled_csv(args.input)
    scores = detector.abnormality_score(model, points)
    auc = detector.auc_roc(scores, flags)
    if args.roc:
        detector.write_roc_csv(args.roc, scores, flags)
    print(f"AUC {auc:.3f}")
    return 0


# --- stats -----------------------------------------------------------------------

def cmd_stats(args: argparse.Namespace) -> int:
    path = Path(args.run_dir) / "stats.csv"
    if not path.exists():
        raise ConfigError(f"no stats.csv under {args.run_dir}")
    rows = artifacts.read_stats_csv(path)
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    header = artifacts.STATS_HEADER.split(",")
    widths = [max(len(h), 12) for h in header]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [f"{row['elapsed_s']:.3f}", str(row["iterations"]),
                 str(row["mutations"]), str(row["crashes"]),
                 str(row["corpus_size"]), f"{row['mean_energy']:.6g}"]
        print("  ".join(c.rjust(w) for c, w in zip(cells, widths)))
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="mdpfuzz",
                     description="Blackbox fuzzer for MDP policies.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a fuzzing campaign")
    run.add_argument("--env", default=None,
                     help=f"environment name ({', '.join(available())}) "
                          f"or 'bridge'")
    run.add_argument("--budget-iters", dest="budget_iters", type=int,
                     default=None, help="iteration budget (deterministic)")
    run.add_argument("--budget-seconds", dest="budget_seconds", type=float,
                     default=None, help="wall-clock budget in seconds")
    run.add_argument("--corpus-size", dest="corpus_size", type=int,
                     default=None)
    run.add_argument("--horizon", type=int, default=None)
    run.add_argument("--rng-seed", dest="rng_seed", type=int, default=None)
    run.add_argument("--k", type=int, default=None,
                     help="mixture components per model")
    run.add_argument("--tau", type=float, default=None,
                     help="freshness threshold on step density")
    run.add_argument("--gamma", type=float, default=None,
                     help="streaming update weight")
    run.add_argument("--beta", type=float, default=None,
                     help="mutation magnitude as a fraction of bound width")
    run.add_argument("--delta-sens", dest="delta_sens", type=float,
                     default=None, help="sensitivity probe magnitude")
    run.add_argument("--lanes", type=int, default=None,
                     help="concurrent rollout lanes (1 = bit-reproducible)")
    run.add_argument("--corpus-capacity", dest="corpus_capacity", type=int,
                     default=None)
    run.add_argument("--no-density-guide", action="store_true",
                     help="reward-only retention (ablation)")
    run.add_argument("--unnormalized-responsibilities", action="store_true",
                     help="use raw weighted densities as responsibilities")
    run.add_argument("--config", default=None,
                     help="JSON config file (flags still win)")
    run.add_argument("--out", default=None,
                     help="output directory (under $MDPFUZZ_OUT if relative)")
    run.add_argument("--resume", action="store_true",
                     help="continue the campaign already in --out")
    run.add_argument("--bridge-cmd", dest="bridge_cmd", default=None,
                     help="spawn this command as the bridge peer (stdio)")
    run.add_argument("--bridge-addr", dest="bridge_addr", default=None,
                     help="connect to a bridge peer at host:port")
    run.add_argument("--timeout", type=float, default=30.0,
                     help="bridge response timeout, seconds")
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="reproduce a recorded crash")
    replay.add_argument("crash_file", help="crashes.jsonl path")
    replay.add_argument("--index", type=int, default=0)
    replay.add_argument("--env", required=True)
    replay.add_argument("--config", default=None,
                        help="config.json supplying env_overrides")
    replay.add_argument("--bridge-cmd", dest="bridge_cmd", default=None)
    replay.add_argument("--bridge-addr", dest="bridge_addr", default=None)
    replay.add_argument("--timeout", type=float, default=30.0)
    replay.set_defaults(func=cmd_replay)

    detect = sub.add_parser("detect", help="anomaly detector")
    dsub = detect.add_subparsers(dest="detect_command", required=True)

    dfit = dsub.add_parser("fit", help="fit on a labeled CSV")
    dfit.add_argument("--input", required=True,
                      help="CSV with header label,f0,f1,...")
    dfit.add_argument("--model", required=True, help="model snapshot path")
    dfit.add_argument("--bandwidth", default="auto",
                      help="kernel bandwidth, or 'auto'")
    dfit.set_defaults(func=cmd_detect_fit)

    dscore = dsub.add_parser("score", help="score observations")
    dscore.add_argument("--model", required=True)
    dscore.add_argument("--input", required=True)
    dscore.add_argument("--output", default=None,
                        help="score CSV (stdout when omitted)")
    dscore.set_defaults(func=cmd_detect_score)

    deval = dsub.add_parser("eval", help="AUC-ROC on a labeled CSV")
    deval.add_argument("--model", required=True)
    deval.add_argument("--input", required=True)
    deval.add_argument("--roc", default=None, help="ROC curve CSV path")
    deval.set_defaults(func=cmd_detect_eval)

    stats = sub.add_parser("stats", help="summarize a run directory")
    stats.add_argument("run_dir")
    stats.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MdpFuzzError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
