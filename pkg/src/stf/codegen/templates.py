"""Template packs: plain-text source trees filled from a compiled bundle.

A pack is a directory holding ``pack.json`` and template files.  ``pack.json``
maps each template to a relative output path::

    {"name": "reference", "files": [{"template": "main.py.tmpl", "output": "main.py"}]}

Templates contain ``{{slot}}`` placeholders; every slot must be listed in
:data:`SLOTS`.  Substitution is pure text replacement, nothing is evaluated.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from stf.codegen.bundle import GenerationError, dumps_bundle, generate_bundle
from stf.model import Model

PACKS_DIR = Path(__file__).resolve().parent / "packs"
MANIFEST_NAME = "MANIFEST.json"
SLOT_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")

# documented slot registry
SLOTS = {
    "bundle_json": "the deployment bundle, canonical JSON",
    "configuration_name": "name of the compiled configuration",
    "model_hash": "sha256 of the canonical model text",
    "tool_version": "version of the generating toolchain",
    "thing_names": "compiled thing names, one per line",
    "instance_table": "instance -> thing lines",
    "connector_table": "connector lines, inst.port <-> inst.port",
    "state_tables": "per-thing state and transition tables",
    "message_enum": "per-thing message signatures",
    "da_config_json": "DA configurations keyed by thing, canonical JSON",
    "default_backend": "backend applied to things lacking one, or 'none'",
    "run_command": "shell command that runs the emitted program",
}


class TemplateError(GenerationError):
    pass


@dataclass
class TemplatePack:
    name: str
    root: Path
    files: list  # [(template name, output path)]

    def templates(self) -> dict:
        return {t: (self.root / t).read_text(encoding="utf-8") for t, _ in self.files}


def load_pack(name_or_path: Union[str, Path]) -> TemplatePack:
    """Load a pack by shipped name or from a directory."""
    p = Path(name_or_path)
    root = p if p.is_dir() else PACKS_DIR / str(name_or_path)
    meta_path = root / "pack.json"
    if not meta_path.is_file():
        raise TemplateError(f"unknown template pack '{name_or_path}'")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        files = [(f["template"], f["output"]) for f in meta["files"]]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise TemplateError(f"malformed pack.json in {root}: {e}") from None
    outputs = [o for _, o in files]
    if len(set(outputs)) != len(outputs):
        raise TemplateError(f"pack '{meta.get('name', root.name)}' lists an output twice")
    for _, o in files:
        if Path(o).is_absolute() or ".." in Path(o).parts or o == MANIFEST_NAME:
            raise TemplateError(f"bad output path '{o}' in pack.json")
    return TemplatePack(meta.get("name", root.name), root, files)


def render(template: str, slots: dict, template_name: str = "<template>") -> str:
    def sub(mo):
        key = mo.group(1)
        if key not in SLOTS or key not in slots:
            raise TemplateError(f"unknown slot '{key}' in template '{template_name}'")
        return slots[key]
    return SLOT_RE.sub(sub, template)


def _state_tables(bundle: dict) -> str:
    lines = []
    for t in bundle["things"]:
        lines.append(f"thing {t['name']}  initial={t['initial']}")
        for i, s in enumerate(t["states"]):
            lines.append(f"  state {i} {s}")
        for j, tr in enumerate(t["transitions"]):
            ev = ".".join(tr["event"]) if tr["event"] else "-"
            guard = " ".join(json.dumps(x) for x in tr["guard"]) if tr["guard"] else "-"
            lines.append(f"  transition {j}: {tr['source']} -> {tr['target']} on {ev} "
                         f"guard {guard}")
    return "\n".join(lines)


def slot_values(bundle: dict) -> dict:
    m = bundle["manifest"]
    cfg = bundle["configuration"]
    things = bundle["things"]
    msg_lines = []
    for t in things:
        for name, params in sorted(t["messages"].items()):
            sig = ", ".join(f"{n}: {ty}" for n, ty in params)
            msg_lines.append(f"{t['name']}.{name}({sig})")
    return {
        "bundle_json": dumps_bundle(bundle).rstrip("\n"),
        "configuration_name": cfg["name"],
        "model_hash": m["model_hash"],
        "tool_version": m["tool_version"],
        "thing_names": "\n".join(t["name"] for t in things),
        "instance_table": "\n".join(f"{i['name']} -> {things[i['thing']]['name']}"
                                    for i in cfg["instances"]),
        "connector_table": "\n".join(f"{a}.{p} <-> {b}.{q}" for a, p, b, q in cfg["connectors"]),
        "state_tables": _state_tables(bundle),
        "message_enum": "\n".join(msg_lines),
        "da_config_json": json.dumps({t["name"]: t["da"] for t in things if t["da"]},
                                     sort_keys=True, indent=1),
        "default_backend": m.get("default_backend") or "none",
        "run_command": "python3 main.py",
    }


def generate_sources(m: Model, pack: Union[str, Path, TemplatePack], out_dir, config=None,
                     default_backend: Optional[str] = None, data_root=None,
                     data_root_hint: Optional[str] = None) -> list:
    """Emit the pack's file tree into ``out_dir``; returns the written paths.

    Every template is rendered before anything is written, so an unknown slot
    leaves the output directory untouched.  ``MANIFEST.json`` lists each
    emitted path with its sha256.
    """
    if not isinstance(pack, TemplatePack):
        pack = load_pack(pack)
    bundle = generate_bundle(m, config, default_backend, data_root, data_root_hint=data_root_hint)
    slots = slot_values(bundle)
    rendered = {}
    for tmpl, text in pack.templates().items():
        out = dict(pack.files)[tmpl]
        rendered[out] = render(text, slots, tmpl)
    out_dir = Path(out_dir)
    written = []
    for rel in sorted(rendered):
        p = out_dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(rendered[rel], encoding="utf-8", newline="")
        written.append(p)
    manifest = {
        "pack": pack.name,
        "manifest": bundle["manifest"],
        "files": {rel: hashlib.sha256(rendered[rel].encode("utf-8")).hexdigest()
                  for rel in sorted(rendered)},
    }
    mp = out_dir / MANIFEST_NAME
    mp.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8",
                  newline="")
    check_tree(out_dir)
    return written + [mp]


def check_tree(out_dir) -> None:
    """Raise if the files under ``out_dir`` differ from its manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    listed = manifest["files"]
    for rel, digest in listed.items():
        p = out_dir / rel
        if not p.is_file():
            raise TemplateError(f"manifest lists '{rel}' but it was not emitted")
        if hashlib.sha256(p.read_bytes()).hexdigest() != digest:
            raise TemplateError(f"'{rel}' does not match its manifest digest")
