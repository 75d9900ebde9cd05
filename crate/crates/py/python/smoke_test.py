"""Smoke test for the tifre Python extension.

Build and run:

    maturin develop -m crates/py/Cargo.toml
    python crates/py/python/smoke_test.py
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import tifre


def check(name, cond):
    print(f"{'ok  ' if cond else 'FAIL'} {name}")
    return cond


def write_frames(folder, n):
    from PIL import Image

    folder.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        img = Image.new("RGB", (16, 12), ((i * 40) % 256, 80, 200 - i * 10))
        img.save(folder / f"{i:03d}.png")


def main():
    results = []

    results.append(check("cosine", math.isclose(tifre.cosine_similarity([1, 0], [1, 1]), 1 / math.sqrt(2))))
    sim = tifre.similarity_matrix([[1, 0], [0, 1]], [[1, 0], [1, 1], [0, 2]])
    sal = tifre.saliency(sim)
    results.append(check("saliency", [round(s, 6) for s in sal] == [1.0, round(1 / math.sqrt(2), 6), 1.0]))
    results.append(check("top-k ties prefer earlier frames", tifre.select_top_k(sal, 2) == [0, 2]))
    results.append(check("fixed fps", tifre.fixed_fps_select(60, 6) == [0, 10, 20, 30, 40, 50]))

    pairs = tifre.match_frames([[1, 0], [0.9, 0.1], [0, 1], [0.1, 0.9]], [0, 2])
    results.append(check("matching", {k: v[0] for k, v in pairs.items()} == {1: 0, 3: 2}))

    key = bytes([100] * 12)
    merged = tifre.merge_group(2, 2, key, [(bytes([200] * 12), 1.0)], "normalized")
    results.append(check("normalized merge", all(math.isclose(p, 150.0) for p in merged)))
    merged = tifre.merge_group(2, 2, key, [(bytes([200] * 12), 0.5)], "paper-literal")
    results.append(check("literal merge", all(math.isclose(p, 100.0) for p in merged)))

    request = tifre.build_rewrite_request("What is the order of fruits appearing in the video?")
    results.append(check("rewrite request", request.endswith("Question:\nWhat is the order of fruits appearing in the video?")))
    results.append(check("parse", tifre.parse_llm_output("1. A photo of a cat.") == ["A photo of a cat."]))
    try:
        tifre.parse_llm_output("no prompts here")
        results.append(check("parse failure raises", False))
    except tifre.TifreError:
        results.append(check("parse failure raises", True))
    fallback = tifre.fallback_prompts("Which animal crosses the road?")
    results.append(check("fallback", fallback and all(p.startswith("a photo of ") for p in fallback)))

    v = tifre.mock_embed(b"frame", 0, 32)
    results.append(check("mock embed", len(v) == 32 and v == tifre.mock_embed(b"frame", 0, 32)))

    rows = tifre.evaluate(seeds=10, k_values=[5], planted_indices=[3, 17, 29, 44, 58])
    by_strategy = {r["strategy"]: r["mean_recall"] for r in rows}
    results.append(check("eval", by_strategy == {"tifre": 1.0, "fixed-fps": 0.0}))

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_frames(tmp / "frames", 12)
        manifest = json.loads(
            tifre.reduce(
                str(tmp / "frames"),
                str(tmp / "out"),
                question="What color is the car?",
                max_frames=3,
                threshold=0.0,
                working_res=(16, 12),
            )
        )
        results.append(check("reduce", len(manifest["outputs"]) == 3))
        on_disk = json.loads((tmp / "out" / "manifest.json").read_text())
        results.append(check("manifest written", on_disk["key_indices"] == manifest["key_indices"]))
        try:
            import jsonschema

            jsonschema.validate(on_disk, json.loads(tifre.MANIFEST_SCHEMA))
            results.append(check("manifest schema", True))
        except ImportError:
            print("skip manifest schema (jsonschema not installed)")
        except jsonschema.ValidationError as e:
            print(e)
            results.append(check("manifest schema", False))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
