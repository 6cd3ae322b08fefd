"""Command line: ``deid``, ``verify`` and ``gen`` subcommands.

Exit codes are the machine contract: 0 success, 1 quarantined files or
failed checks, 2 configuration or input errors. Human-readable output goes
to standard error; reports and logs go to files.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .pipeline import run_pipeline
from .pseudonym import DEFAULT_UID_ROOT, PLACEHOLDER
from .ruleset import RulesetError, load_ruleset
from .scrub import BadPattern, load_lists
from .synth import NonEmptyOutputDir, SynthSpec, generate
from .verify import MalformedKey, Mappings, read_key, render_reports, verify_corpus

log = logging.getLogger("dicom_deid")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
UID_ROOT_ENV = "DEID_UID_ROOT"


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    ruleset: Path | None = None
    allow: Path | None = None
    deny: Path | None = None
    patterns: Path | None = None
    uid_root: str | None = None
    seed: int = 0
    workers: int | None = None
    fill: int | tuple[int, ...] | None = None
    strict: bool = False
    mappings: Path | None = None

    PATHS = ("ruleset", "allow", "deny", "patterns", "mappings")

    def check_paths(self) -> None:
        for name in self.PATHS:
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ConfigError(f"{name} path {p} does not exist")
        if self.uid_root is not None and self.uid_root.count(PLACEHOLDER) != 1:
            raise ConfigError(f"uid_root must contain {PLACEHOLDER} exactly once")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")


def parse_fill(value) -> int | tuple[int, ...] | None:
    if value is None or isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, list):
        parts = value
    else:
        parts = str(value).split(",")
    try:
        nums = tuple(int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"fill must be an integer or comma-separated integers, got {value!r}") from None
    return nums[0] if len(nums) == 1 else nums


def load_config(path: Path | None) -> RunConfig:
    """Read a key = value config file. Relative paths resolve against its folder."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    for key, value in data.items():
        if key in RunConfig.PATHS:
            p = Path(str(value))
            value = p if p.is_absolute() else path.parent / p
        elif key == "fill":
            value = parse_fill(value)
        elif key in ("seed", "workers") and not (isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(f"{path}: {key} must be an integer")
        elif key == "strict" and not isinstance(value, bool):
            raise ConfigError(f"{path}: strict must be true or false")
        elif key == "uid_root" and not isinstance(value, str):
            raise ConfigError(f"{path}: uid_root must be a string")
        setattr(cfg, key, value)
    return cfg


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then environment, then flags; later sources win."""
    cfg = load_config(args.config)
    if os.environ.get(UID_ROOT_ENV):
        cfg.uid_root = os.environ[UID_ROOT_ENV]
    for name in ("ruleset", "allow", "deny", "patterns", "mappings", "uid_root", "seed", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "fill", None) is not None:
        cfg.fill = parse_fill(args.fill)
    if getattr(args, "strict", False):
        cfg.strict = True
    cfg.check_paths()
    return cfg


def cmd_deid(args: argparse.Namespace) -> int:
    try:
        cfg = resolve_config(args)
        if not args.in_dir.is_dir():
            raise ConfigError(f"input directory {args.in_dir} does not exist")
        ruleset = load_ruleset(cfg.ruleset)
        recognizers = load_lists(cfg.allow, cfg.deny, cfg.patterns)
    except (ConfigError, RulesetError, BadPattern, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    summary = run_pipeline(args.in_dir, args.out, ruleset, seed=cfg.seed, recognizers=recognizers,
                           workers=cfg.workers, strict=cfg.strict, fill=cfg.fill,
                           mappings_dir=cfg.mappings, uid_root=cfg.uid_root)
    log.info("processed %d files, %d elements, %d patients, %d boxes redacted",
             summary.files, summary.elements, summary.patients, summary.redacted_boxes)
    for f in summary.failed:
        log.error("quarantined %s: %s", f["file"], f["error"])
    return EXIT_FAIL if summary.failed else EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        cfg = resolve_config(args)
        template = cfg.uid_root
        if template is None:
            template = load_ruleset(cfg.ruleset).uid_root_template if cfg.ruleset else DEFAULT_UID_ROOT
        key = read_key(args.key)
        mappings = Mappings.load(args.mappings or args.deid, template)
    except (ConfigError, RulesetError, MalformedKey) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        log.error("cannot load mappings: %s", exc)
        return EXIT_CONFIG
    results, summary = verify_corpus(args.in_dir, args.deid, key, mappings)
    render_reports(results, summary, args.out or args.deid)
    print(summary.format_table(), file=sys.stderr)
    return EXIT_FAIL if summary.fail else EXIT_OK


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("-")
    try:
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or N-M, got {text!r}") from None


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        spec = SynthSpec(seed=args.seed or 0, n_patients=args.patients,
                         studies_per_patient=args.studies, series_per_study=args.series,
                         instances_per_series=args.instances, phi_density=args.phi_density,
                         burn_in_fraction=args.burn_in)
        corpus = generate(spec, args.out)
    except (NonEmptyOutputDir, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    log.info("generated %d files and %d key entries in %s", len(corpus.files), len(corpus.key), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dicom-deid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key = value config file")
        sp.add_argument("--ruleset", type=Path, help="ruleset file (default: bundled)")
        sp.add_argument("--uid-root", dest="uid_root", help=f"UID root template with {PLACEHOLDER}")
        sp.add_argument("--mappings", type=Path, help="folder holding mapping CSVs")

    d = sub.add_parser("deid", help="de-identify a corpus")
    d.add_argument("--in", dest="in_dir", type=Path, required=True)
    d.add_argument("--out", type=Path, required=True)
    common(d)
    d.add_argument("--seed", type=int)
    d.add_argument("--workers", type=int)
    d.add_argument("--strict", action="store_true", help="reject non-conformant input")
    d.add_argument("--allow", type=Path)
    d.add_argument("--deny", type=Path)
    d.add_argument("--patterns", type=Path)
    d.add_argument("--fill", help="pixel fill value, e.g. 0 or 0,0,0")
    d.set_defaults(func=cmd_deid)

    v = sub.add_parser("verify", help="grade a de-identified corpus against an answer key")
    v.add_argument("--in", dest="in_dir", type=Path, required=True, help="original corpus")
    v.add_argument("--deid", type=Path, required=True, help="de-identified corpus")
    v.add_argument("--key", type=Path, required=True)
    v.add_argument("--out", type=Path, help="report folder (default: the --deid folder)")
    common(v)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen", help="generate a synthetic corpus with an answer key")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--patients", type=int, default=3)
    g.add_argument("--studies", type=_range, default=(1, 2), help="N or N-M per patient")
    g.add_argument("--series", type=_range, default=(1, 2), help="N or N-M per study")
    g.add_argument("--instances", type=_range, default=(1, 3), help="N or N-M per series")
    g.add_argument("--phi-density", type=float, default=0.6)
    g.add_argument("--burn-in", type=float, default=0.3)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", force=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
