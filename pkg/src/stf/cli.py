"""Command-line interface.

Exit codes: 0 success, 1 model errors, 2 usage errors, 3 runtime or
generation failure.  With ``--format report`` the machine-readable JSON goes
to stdout and the human-readable text to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from stf import __version__

EXIT_OK, EXIT_MODEL, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ModelErrors(Exception):
    def __init__(self, lines: list, records: list):
        super().__init__(f"{len(lines)} error(s)")
        self.lines = lines
        self.records = records


class Output:
    def __init__(self, fmt: str):
        self.report_mode = fmt == "report"
        self.text = sys.stderr if self.report_mode else sys.stdout
        self.report: dict = {}

    def say(self, line: str = "") -> None:
        print(line, file=self.text)

    def finish(self, code: int) -> int:
        if self.report_mode:
            self.report["exit_code"] = code
            sys.stdout.write(json.dumps(self.report, sort_keys=True, indent=2) + "\n")
        return code


# -- model loading ---------------------------------------------------------------------

def load_models(paths: list):
    """Parse and merge the given files; later files refine earlier ones."""
    from stf.model import FileResolver, Import, Model, ModelError, merge_imports
    from stf.parser import parse_file

    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"model file not found: {p}")
    lines, records, models = [], [], []
    for p in paths:
        m, diags = parse_file(p)
        for d in diags:
            lines.append(d.render())
            records.append({"rule": d.rule_id, "severity": d.severity, "message": d.message,
                            "file": d.span.file, "line": d.span.line, "column": d.span.column})
        models.append(m)
    if lines:
        raise ModelErrors(lines, records)
    try:
        if len(paths) == 1:
            return merge_imports(models[0], FileResolver(), origin=str(Path(paths[0]).resolve()))
        root = Model(imports=tuple(Import(str(Path(p).resolve())) for p in paths))
        return merge_imports(root, FileResolver(), origin="<command line>")
    except ModelError as e:
        raise ModelErrors([f"{paths[0]}: error[IMPORT]: {e}"],
                          [{"rule": "IMPORT", "severity": "error", "message": str(e)}]) from None


def _data_root(args):
    from stf.validator import default_data_root
    return default_data_root(args.models[0] if getattr(args, "models", None) else None,
                             args.data_root)


def check_models(args, out: Output):
    """Load and validate; returns ``(model, diagnostics)`` or raises ModelErrors."""
    from stf.validator import DataProvider, has_errors, validate

    m = load_models(args.models)
    diags = validate(m, DataProvider(_data_root(args)))
    out.report["diagnostics"] = [d.to_record() for d in diags]
    for d in diags:
        out.say(d.render())
    if has_errors(diags):
        raise ModelErrors([], [])
    return m, diags


# -- commands --------------------------------------------------------------------------

def cmd_check(args, out: Output) -> int:
    _, diags = check_models(args, out)
    n = {s: sum(d.severity == s for d in diags) for s in ("error", "warning", "hint")}
    out.say(f"{len(args.models)} file(s): {n['error']} error(s), {n['warning']} warning(s), "
            f"{n['hint']} hint(s)")
    return EXIT_OK


def cmd_generate(args, out: Output) -> int:
    from stf.codegen import dumps_bundle, generate_bundle, generate_sources
    from stf.model import platform_completeness

    m, _ = check_models(args, out)
    missing = platform_completeness(m)
    if missing and not args.default_backend:
        out.say(f"error: no DA backend for {', '.join(missing)}; add @backend to the thing "
                "or pass --default-backend")
        out.report["platform_incomplete"] = missing
        return EXIT_MODEL
    if missing:
        out.say(f"warning: using default backend '{args.default_backend}' for "
                f"{', '.join(missing)}")
    root = _data_root(args)
    target = args.target
    if target == "bundle":
        dest = Path(args.output or "bundle.json")
        hint = os.path.relpath(root.resolve(), dest.resolve().parent)
        bundle = generate_bundle(m, args.config, args.default_backend, root,
                                 data_root_hint=hint)
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(dumps_bundle(bundle), encoding="utf-8", newline="")
        files = [dest]
        manifest = bundle["manifest"]
    elif target.startswith("pack:"):
        dest = Path(args.output or "generated")
        hint = os.path.relpath(root.resolve(), dest.resolve())
        files = generate_sources(m, target[5:], dest, args.config, args.default_backend, root,
                                 data_root_hint=hint)
        manifest = json.loads((dest / "MANIFEST.json").read_text(encoding="utf-8"))["manifest"]
    else:
        raise UsageError(f"unknown target '{target}' (use bundle or pack:<name>)")
    out.say(f"configuration {manifest['configuration']}, model {manifest['model_hash'][:16]}")
    for f in files:
        out.say(f"  wrote {f}")
    out.report.update(manifest=manifest, files=[str(f) for f in files])
    return EXIT_OK


def _is_bundle(path: Path) -> bool:
    if path.suffix == ".json":
        return True
    with open(path, encoding="utf-8", errors="replace") as fh:
        return fh.read(64).lstrip().startswith("{")


def cmd_run(args, out: Output) -> int:
    from stf.codegen import instantiate_bundle
    from stf.runtime import instantiate, load_scenario

    src = Path(args.models[0])
    if not src.is_file():
        raise UsageError(f"input file not found: {src}")
    scenario = load_scenario(args.scenario) if args.scenario else None
    if _is_bundle(src):
        if len(args.models) > 1:
            raise UsageError("run takes a single bundle")
        sim = instantiate_bundle(src, args.data_root or os.environ.get("STF_DATA_ROOT"),
                                 args.seed, args.persist_saves)
    else:
        m, _ = check_models(args, out)
        sim = instantiate(m, args.config, _data_root(args), args.seed, args.persist_saves)
    trace = sim.run(scenario, args.max_ticks)
    if args.trace_out:
        trace.write(args.trace_out)
    elif not out.report_mode:
        sys.stdout.write(trace.to_jsonl())
    trained = trace.of_kind("da_train")
    errors = trace.of_kind("error")
    for ev in trained:
        r = ev.data["report"]
        line = f"{ev.instance}: {r['mode']} {r['algorithm']} on {r['rows']} rows"
        if "cv_score" in r:
            line += f", cv {r['metric']} {r['cv_score']:.4f}"
        out.say(line + ", train " + json.dumps(r["train_metrics"], sort_keys=True))
    out.say(f"{len(trace)} events, {len(errors)} error(s), final tick {sim.tick}")
    out.report.update(events=len(trace), errors=[e.to_record() for e in errors],
                      da_train=[dict(e.data["report"], instance=e.instance) for e in trained])
    if errors and args.strict:
        for e in errors:
            out.say(f"tick {e.tick}: {e.instance}: error[{e.data.get('source')}]: "
                    f"{e.data.get('message')}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_synth(args, out: Output) -> int:
    from stf.corpus import GENERATORS, GeneratorError, synth

    if args.name not in GENERATORS:
        raise UsageError(f"unknown scenario '{args.name}' (known: {', '.join(GENERATORS)})")
    try:
        text = synth(args.name, args.seed, args.n)
    except GeneratorError as e:
        raise UsageError(str(e)) from None
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="")
        out.say(f"wrote {args.n} rows to {args.output}")
        out.report["files"] = [args.output]
    elif out.report_mode:
        out.report["csv"] = text
    else:
        sys.stdout.write(text)
    out.report["rows"] = args.n
    return EXIT_OK


def cmd_version(args, out: Output) -> int:
    out.say(f"stf {__version__}")
    out.report["version"] = __version__
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "report"), default="text")

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("models", nargs="+", metavar="MODEL")
    models.add_argument("--data-root", help="directory dataset paths are relative to")
    models.add_argument("--config", help="configuration name (default: the first)")

    ap = argparse.ArgumentParser(prog="stf", description="modeling toolchain for things with "
                                                          "data-analytics blocks")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common, models], help="parse, merge and validate")

    g = sub.add_parser("generate", parents=[common, models], help="compile a configuration")
    g.add_argument("--target", default="bundle", help="bundle or pack:<name>")
    g.add_argument("-o", "--output")
    g.add_argument("--default-backend")

    r = sub.add_parser("run", parents=[common, models], help="simulate a model or bundle")
    r.add_argument("--scenario")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace-out")
    r.add_argument("--max-ticks", type=int)
    r.add_argument("--strict", action="store_true", help="exit 3 on runtime error events")
    r.add_argument("--persist-saves", action="store_true",
                   help="append da_save rows to the dataset file")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("name")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("-o", "--output")

    sub.add_parser("version", parents=[common])
    return ap


COMMANDS = {"check": cmd_check, "generate": cmd_generate, "run": cmd_run, "synth": cmd_synth,
            "version": cmd_version}


def main(argv=None) -> int:
    from stf.codegen import BundleError, GenerationError
    from stf.runtime import DAError, InstantiationError, ScenarioError

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    out = Output(args.format)
    try:
        code = COMMANDS[args.command](args, out)
    except UsageError as e:
        out.say(f"stf {args.command}: {e}")
        code = EXIT_USAGE
    except ScenarioError as e:
        out.say(f"stf {args.command}: bad scenario: {e}")
        code = EXIT_USAGE
    except ModelErrors as e:
        for line in e.lines:
            out.say(line)
        if e.records:
            out.report["diagnostics"] = e.records
        code = EXIT_MODEL
    except GenerationError as e:
        out.say(f"stf {args.command}: {e}")
        code = EXIT_MODEL if e.model_error else EXIT_FAILURE
    except (BundleError, InstantiationError, DAError, OSError) as e:
        out.say(f"stf {args.command}: {e}")
        code = EXIT_FAILURE
    return out.finish(code)


if __name__ == "__main__":
    sys.exit(main())
