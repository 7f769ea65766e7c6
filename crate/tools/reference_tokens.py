"""Freeze reference CLIP tokenizations for the tokenizer fixture tests.

Usage: python reference_tokens.py <path/to/open_clip/tokenizer.py> <out.json>
"""
import importlib.util
import json
import sys

CAPTIONS = [
    "",
    "a photo of a cat",
    "A man riding a wave on top of a surfboard.",
    "Two dogs   playing\tin the  snow",
    "The café on the corner serves crème brûlée!",
    "It's 3:45pm and we'll leave at 1995 or 2023?",
    "London Bridge, seen from the river Thames (UK)",
    "emoji 🙂 and symbols @#$%^&*",
    "Ünïcödé ßtraße 東京 タワー",
    "don't won't they're I've you'd she'll I'm",
    "supercalifragilisticexpialidocious antidisestablishmentarianism",
    " ".join(["word"] * 500),
]


def main(tok_path, out_path):
    spec = importlib.util.spec_from_file_location("clip_tokenizer", tok_path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    tok = mod.SimpleTokenizer()
    cases = []
    for caption in CAPTIONS:
        ids = tok([caption])[0].tolist()
        cases.append({"caption": caption, "ids": ids})
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"context_length": 77, "cases": cases}, f, ensure_ascii=False, indent=1)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
