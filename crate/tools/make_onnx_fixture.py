"""Build a tiny image/text encoder pair honouring the ONNX backbone contract
and freeze reference embeddings for three fixture images and captions.

Usage: python make_onnx_fixture.py <open_clip tokenizer.py> <out_dir>
"""
import importlib.util
import json
import sys

import numpy as np
import torch
from PIL import Image

R = 224
CTX = 77
DIM = 16
MEAN = np.array([0.48145466, 0.4578275, 0.40821073], dtype=np.float32)
STD = np.array([0.26862954, 0.26130258, 0.27577711], dtype=np.float32)
CAPTIONS = ["a photo of a cat", "A man riding a wave on top of a surfboard.", ""]


class ImageEncoder(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.pool = torch.nn.AvgPool2d(56)
        self.proj = torch.nn.Linear(48, DIM)

    def forward(self, pixel_values):
        x = self.pool(pixel_values).flatten(1)
        return self.proj(x)


class TextEncoder(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.proj = torch.nn.Linear(CTX, DIM)

    def forward(self, input_ids):
        x = input_ids.to(torch.float32) / 49408.0
        return torch.tanh(self.proj(x))


def fixture_images():
    rng = np.random.default_rng(7)
    yy, xx = np.mgrid[0:224, 0:224]
    grad = np.stack([xx, yy, (xx + yy) // 2], axis=-1).astype(np.uint8)
    wide = rng.integers(0, 256, size=(224, 300, 3), dtype=np.uint8)
    tall = ((np.indices((260, 224)).sum(0) // 8) % 2 * 255).astype(np.uint8)
    tall = np.stack([tall, 255 - tall, np.full_like(tall, 90)], axis=-1)
    return {"gradient.png": grad, "noise_wide.png": wide, "checker_tall.png": tall}


def preprocess(arr):
    h, w, _ = arr.shape
    top, left = (h - R) // 2, (w - R) // 2
    crop = arr[top:top + R, left:left + R].astype(np.float32) / 255.0
    crop = (crop - MEAN) / STD
    return crop.transpose(2, 0, 1)[None]


def main(tok_path, out):
    torch.manual_seed(0)
    img_enc, txt_enc = ImageEncoder().eval(), TextEncoder().eval()
    kw = dict(dynamo=False, opset_version=13)
    torch.onnx.export(img_enc, torch.zeros(1, 3, R, R), f"{out}/image.onnx",
                      input_names=["pixel_values"], output_names=["image_embeds"],
                      dynamic_axes={"pixel_values": {0: "N"}, "image_embeds": {0: "N"}}, **kw)
    torch.onnx.export(txt_enc, torch.zeros(1, CTX, dtype=torch.long), f"{out}/text.onnx",
                      input_names=["input_ids"], output_names=["text_embeds"],
                      dynamic_axes={"input_ids": {0: "N"}, "text_embeds": {0: "N"}}, **kw)

    spec = importlib.util.spec_from_file_location("clip_tokenizer", tok_path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    tok = mod.SimpleTokenizer()

    ref = {"image_dim": DIM, "text_dim": DIM, "images": [], "captions": []}
    with torch.no_grad():
        for name, arr in fixture_images().items():
            Image.fromarray(arr).save(f"{out}/{name}")
            emb = img_enc(torch.from_numpy(preprocess(arr)))[0].tolist()
            ref["images"].append({"file": name, "embedding": emb})
        for caption in CAPTIONS:
            ids = tok([caption])
            emb = txt_enc(ids)[0].tolist()
            ref["captions"].append({"caption": caption, "embedding": emb})
    with open(f"{out}/reference.json", "w") as f:
        json.dump(ref, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
