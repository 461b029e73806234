#!/usr/bin/env python3
# Copyright 2026 The finecf Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Exports a torchvision ResNet-50 / VGG-16 state_dict to the FCWT format.

With --reference, also writes a JSON file holding a deterministic input
image in [0, 1] and the logits torch computes for it (float64), for
cross-checking the C++ forward pass.
"""

import argparse
import json
import struct

import torch
import torchvision

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]


def build(arch, num_classes, weights):
    ctor = {"resnet50": torchvision.models.resnet50, "vgg16": torchvision.models.vgg16}[arch]
    if weights == "imagenet":
        return ctor(weights="DEFAULT")
    return ctor(weights=None, num_classes=num_classes)


def randomize_batchnorm(model, generator):
    for module in model.modules():
        if isinstance(module, torch.nn.BatchNorm2d):
            with torch.no_grad():
                module.running_mean.uniform_(-0.1, 0.1, generator=generator)
                module.running_var.uniform_(0.5, 1.5, generator=generator)
                module.weight.uniform_(0.5, 1.5, generator=generator)
                module.bias.uniform_(-0.1, 0.1, generator=generator)


def write_fcwt(path, state_dict):
    tensors = [(k, v) for k, v in state_dict.items() if v.dtype.is_floating_point]
    with open(path, "wb") as out:
        out.write(b"FCWT")
        out.write(struct.pack("<IQ", 1, len(tensors)))
        for name, value in tensors:
            encoded = name.encode()
            out.write(struct.pack("<I", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<I", value.dim()))
            out.write(struct.pack("<%dq" % value.dim(), *value.shape))
            out.write(struct.pack("<B", 1))
            out.write(value.detach().to(torch.float64).contiguous().numpy().tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--arch", choices=["resnet50", "vgg16"], required=True)
    parser.add_argument("--out", required=True, help="checkpoint path")
    parser.add_argument("--weights", choices=["random", "imagenet"], default="random")
    parser.add_argument("--num-classes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reference", help="write input and expected logits here")
    args = parser.parse_args()

    torch.manual_seed(args.seed)
    model = build(args.arch, args.num_classes, args.weights).double().eval()
    generator = torch.Generator().manual_seed(args.seed + 1)
    if args.weights == "random":
        randomize_batchnorm(model, generator)
    write_fcwt(args.out, model.state_dict())

    if args.reference:
        image = torch.rand(3, 224, 224, generator=generator, dtype=torch.float64)
        mean = torch.tensor(IMAGENET_MEAN, dtype=torch.float64).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD, dtype=torch.float64).view(3, 1, 1)
        with torch.no_grad():
            logits = model(((image - mean) / std).unsqueeze(0))[0]
        with open(args.reference, "w") as out:
            json.dump({"arch": args.arch, "mean": IMAGENET_MEAN, "std": IMAGENET_STD,
                       "image": image.flatten().tolist(), "logits": logits.tolist()}, out)


if __name__ == "__main__":
    main()
