"""Shared torch plumbing: seeded init, numpy bridges, state (de)serialization."""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
from torch import nn

from .errors import FormatError, ShapeError


def seeded_init_(module: nn.Module, seed: int) -> nn.Module:
    """Deterministically initialize all parameters from a private generator.

    Conv/linear weights get Kaiming-normal values (std = sqrt(2 / fan_in)),
    biases zero. Iteration follows sorted parameter names so the result does
    not depend on registration order.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            if param.dim() > 1:
                fan_in = param[0].numel()
                std = math.sqrt(2.0 / fan_in)
                param.normal_(0.0, std, generator=gen)
            else:
                param.zero_()
    return module


def hwc_to_batch(img: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, C) numpy image -> (1, C, H, W) torch tensor."""
    if img.ndim != 3:
        raise ShapeError(f"expected (H, W, C) array, got shape {img.shape}")
    return torch.from_numpy(np.ascontiguousarray(img)).permute(2, 0, 1).unsqueeze(0).to(dtype)


def stack_to_batch(imgs, dtype=torch.float32) -> torch.Tensor:
    """List of (H, W, C) images -> (N, C, H, W) tensor."""
    return torch.cat([hwc_to_batch(im, dtype) for im in imgs], dim=0)


def batch_to_hwc(t: torch.Tensor) -> list[np.ndarray]:
    """(N, C, H, W) tensor -> list of float32 (H, W, C) arrays."""
    out = t.detach().cpu().to(torch.float32).permute(0, 2, 3, 1).numpy()
    return [np.ascontiguousarray(out[i]) for i in range(out.shape[0])]


def collect_state(module: nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """state_dict as prefixed numpy float32 arrays, e.g. 'g2.enc.0.weight'."""
    return {
        f"{prefix}.{k}": v.detach().cpu().numpy().astype(np.float32)
        for k, v in module.state_dict().items()
    }


def load_state(module: nn.Module, tensors: dict[str, np.ndarray], prefix: str) -> None:
    """Load prefixed tensors back into a module; missing names are an error."""
    state = {}
    want = prefix + "."
    for key in module.state_dict():
        full = want + key
        if full not in tensors:
            raise FormatError(f"checkpoint missing tensor {full!r}")
        state[key] = torch.from_numpy(np.ascontiguousarray(tensors[full]))
    module.load_state_dict(state)


def param_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameter bytes in sorted-name order."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().astype(np.float32).tobytes())
    return digest.hexdigest()


def count_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
