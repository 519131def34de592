"""On-disk benchmark layout.

    <root>/manifest.json
    <root>/<category>/<variant>/scene.json
                               calib.json
                               instr_<k>.txt          instruction text
                               instr_<k>.constraint   constraint s-expression
                               head_rgb.png
                               head_depth.png         uint16, millimeters, 0 = no hit
                               wrist_rgb.png

Every JSON document carries the generation fingerprint of the config that
produced it.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

from .config import ConfigError, RunConfig
from .evaluate import INSTRUCTIONS_PER_SCENE, TrialSpec, render_observation
from .instruct import generate_instruction, load_instruction
from .render import load_depth_png, load_rgb, save_depth_png, save_rgb
from .scene import camera_to_dict, document_fingerprint, dumps_scene, generate_scene, loads_scene, pose_to_dict
from .seeding import derive_seed

MANIFEST = "manifest.json"
FORMAT = "slotgoal-benchmark/1"


class FingerprintMismatch(ConfigError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_benchmark(cfg: RunConfig, root: str | Path) -> Path:
    root = Path(root)
    fp = cfg.generation_fingerprint()
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for cat in cfg.categories:
        for v in range(1, cfg.variants + 1):
            scene = generate_scene(cat, v, cfg.seed, cfg.resolution)
            d = root / cat / str(v)
            d.mkdir(parents=True, exist_ok=True)
            (d / "scene.json").write_text(dumps_scene(scene, fp))
            calib = {
                "fingerprint": fp,
                "cameras": {cid: camera_to_dict(c) for cid, c in scene.cameras.items()},
                "ee_pose": pose_to_dict(scene.ee_pose),
                "hand_eye": pose_to_dict(scene.hand_eye),
            }
            (d / "calib.json").write_text(_dump(calib))
            for k in range(1, INSTRUCTIONS_PER_SCENE + 1):
                instr = generate_instruction(scene, cat, k, cfg.seed)
                (d / f"instr_{k}.txt").write_text(instr.text + "\n")
                (d / f"instr_{k}.constraint").write_text(instr.constraint_text + "\n")
            head_rgb, head_depth, images = render_observation(scene)
            save_rgb(d / "head_rgb.png", head_rgb)
            save_depth_png(d / "head_depth.png", head_depth)
            save_rgb(d / "wrist_rgb.png", images["wrist"])
            entries.append(f"{cat}/{v}")
    manifest = {
        "format": FORMAT,
        "fingerprint": fp,
        "config": {k: cfg.to_dict()[k] for k in ("categories", "variants", "seed", "resolution")},
        "scenes": entries,
    }
    (root / MANIFEST).write_text(_dump(manifest))
    return root


def read_manifest(root: str | Path) -> dict:
    p = Path(root) / MANIFEST
    try:
        doc = json.loads(p.read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"no readable benchmark manifest at {p}: {e}") from e
    if doc.get("format") != FORMAT:
        raise ConfigError(f"{p} is not a benchmark manifest")
    return doc


def check_fingerprint(cfg: RunConfig, root: str | Path) -> None:
    want = cfg.generation_fingerprint()
    got = read_manifest(root).get("fingerprint")
    if got != want:
        raise FingerprintMismatch(
            f"benchmark at {root} was generated with fingerprint {got}, but this config gives {want}; "
            "regenerate it or use the matching categories/variants/seed/resolution"
        )


def load_trials(cfg: RunConfig, root: str | Path) -> Iterator[TrialSpec]:
    """Same trial schedule as the in-memory suite, read from disk."""
    root = Path(root)
    check_fingerprint(cfg, root)
    want = cfg.generation_fingerprint()
    for cat in cfg.categories:
        cache = {}
        for t in range(cfg.trials):
            v = t % cfg.variants + 1
            k = (t // cfg.variants) % INSTRUCTIONS_PER_SCENE + 1
            d = root / cat / str(v)
            if v not in cache:
                text = (d / "scene.json").read_text()
                if document_fingerprint(text) != want:
                    raise FingerprintMismatch(f"{d / 'scene.json'} carries a different fingerprint")
                cache[v] = (
                    loads_scene(text),
                    load_rgb(d / "head_rgb.png"),
                    load_depth_png(d / "head_depth.png"),
                    load_rgb(d / "wrist_rgb.png"),
                )
            scene, rgb, depth, wrist = cache[v]
            instr = load_instruction((d / f"instr_{k}.txt").read_text(), (d / f"instr_{k}.constraint").read_text(), cat)
            yield TrialSpec(f"{cat}-{t:04d}", cat, scene, instr, rgb, depth,
                            derive_seed(cfg.seed, "trial", cat, t), {"head": rgb, "wrist": wrist})
