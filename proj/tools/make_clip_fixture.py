# Copyright 2026 The LGNet Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the tiny random CLIP checkpoint used by the C++ encoder tests.

The vocabulary is the first N merges of the OpenAI CLIP BPE table, so the
tokenizer exercises real merges. Reference outputs come from transformers.

  python3 tools/make_clip_fixture.py --bpe bpe_simple_vocab_16e6.txt.gz --out tests/data/tiny_clip
"""

import argparse
import gzip
import json
import os

import numpy as np
import torch
from PIL import Image
from transformers import CLIPConfig, CLIPModel, CLIPTokenizer
from transformers.models.clip.image_processing_pil_clip import CLIPImageProcessorPil


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return [chr(c) for c in cs]


TEXTS = [
    "The small target lies in the top-left quadrant.",
    "A faint warm spot appears in the upper RIGHT region, near 3 clouds!",
    "left",
    "right",
    "  multiple   spaces\tand\nnewlines, it's fine ",
    "zebra-xylophone quokka 1234 $$$",
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bpe", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--merges", type=int, default=2000)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    lines = gzip.open(args.bpe).read().decode("utf-8").split("\n")
    merges = [tuple(m.split()) for m in lines[1 : 1 + args.merges]]
    chars = bytes_to_unicode()
    vocab = chars + [c + "</w>" for c in chars] + ["".join(m) for m in merges] + ["<|startoftext|>", "<|endoftext|>"]
    vocab_map = {v: i for i, v in enumerate(vocab)}
    with open(os.path.join(args.out, "vocab.json"), "w", encoding="utf-8") as f:
        json.dump(vocab_map, f, ensure_ascii=False)
    with open(os.path.join(args.out, "merges.txt"), "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")

    bos, eos = vocab_map["<|startoftext|>"], vocab_map["<|endoftext|>"]
    config = CLIPConfig(
        text_config=dict(
            vocab_size=len(vocab), hidden_size=32, intermediate_size=64, num_hidden_layers=2, num_attention_heads=4,
            max_position_embeddings=77, hidden_act="quick_gelu", bos_token_id=bos, eos_token_id=eos, pad_token_id=eos,
        ),
        vision_config=dict(
            hidden_size=32, intermediate_size=64, num_hidden_layers=2, num_attention_heads=4, image_size=32,
            patch_size=8, hidden_act="quick_gelu",
        ),
        projection_dim=16,
        initializer_factor=4.0,
    )
    torch.manual_seed(0)
    model = CLIPModel(config).eval()
    model.save_pretrained(args.out, safe_serialization=True)

    tok = CLIPTokenizer(vocab=vocab_map, merges=list(merges))
    # PIL backend: matches the original OpenAI preprocessing
    proc = CLIPImageProcessorPil(
        size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32}, do_convert_rgb=True,
    )

    rng = np.random.default_rng(3)
    images = {
        "square": rng.integers(0, 256, size=(32, 32), dtype=np.uint8),
        "wide": rng.integers(0, 256, size=(40, 56), dtype=np.uint8),
        "tall": rng.integers(0, 256, size=(20, 16), dtype=np.uint8),
        "large": rng.integers(0, 256, size=(97, 130), dtype=np.uint8),
    }
    expected = {"texts": [], "images": []}
    with torch.no_grad():
        for t in TEXTS:
            ids = tok(t, truncation=True, max_length=77)["input_ids"]
            emb = model.get_text_features(input_ids=torch.tensor([ids]))
            if not torch.is_tensor(emb):
                emb = emb.pooler_output
            expected["texts"].append({"text": t, "ids": ids, "embedding": emb[0].tolist()})
        for name, px in images.items():
            pil = Image.fromarray(px, mode="L").convert("RGB")
            pv = proc(images=pil, return_tensors="pt")["pixel_values"]
            emb = model.get_image_features(pixel_values=pv)
            if not torch.is_tensor(emb):
                emb = emb.pooler_output
            expected["images"].append(
                {"name": name, "height": px.shape[0], "width": px.shape[1], "pixels": px.flatten().tolist(),
                 "pixel_values": pv[0].flatten().tolist(), "embedding": emb[0].tolist()}
            )
    with open(os.path.join(args.out, "expected.json"), "w", encoding="utf-8") as f:
        json.dump(expected, f)


if __name__ == "__main__":
    main()
