"""Small text-conditioned UNet for 64x64 pixel diffusion.

Three downsamplings (64 -> 32 -> 16 -> 8) with cross-attention on the 16x16
and 8x8 grids; the 8x8 layer is the coarsest attention level and the one
the alignment loss supervises. Every cross-attention block returns its
softmax maps so callers can bundle them per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..protocol.captions import VOCAB


@dataclass
class ModelConfig:
    image_size: int = 64
    base_channels: int = 16
    channel_mults: tuple[int, ...] = (1, 2, 4, 4)
    d_cond: int = 48
    heads: int = 2
    max_tokens: int = 32
    vocab_size: int = len(VOCAB)
    attn_levels: tuple[int, ...] = (2, 3)  # indices into the resolution ladder: 16x16, 8x8
    dtype: str = "float64"

    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]


class TokenEmbedding(nn.Module):
    """Learned token table plus group-slot position table.

    Position ids are group-relative (see the caption module): the slot of a
    token encodes its semantic group and offset, which is what makes the
    discretized caption a fixed arrangement the network can bind against.
    """

    def __init__(self, vocab_size: int, d_cond: int, max_tokens: int):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, d_cond)
        self.pos = nn.Embedding(max(max_tokens, 32), d_cond)

    def forward(self, tokens: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        # tokens, positions: [B, T] int64
        return self.tok(tokens) + self.pos(positions)


def timestep_embedding(t: torch.Tensor, dim: int, dtype: torch.dtype) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) / half)
    args = t.to(dtype)[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_dim: int):
        super().__init__()
        groups = math.gcd(8, c_in)
        self.norm1 = nn.GroupNorm(groups, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.t_proj = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(math.gcd(8, c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Identity() if c_in == c_out else nn.Conv2d(c_in, c_out, 1)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.t_proj(t_emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttentionBlock(nn.Module):
    """Multi-head cross-attention from spatial features to caption tokens."""

    def __init__(self, channels: int, d_cond: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ValueError("channels must divide evenly into heads")
        self.heads = heads
        self.norm = nn.GroupNorm(math.gcd(8, channels), channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(d_cond, channels, bias=False)
        self.to_v = nn.Linear(d_cond, channels, bias=False)
        self.proj = nn.Linear(channels, channels)

    def forward(
        self, x: torch.Tensor, cond: torch.Tensor, key_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        # x: [B, C, H, W]; cond: [B, T, d]; key_mask: [B, T] True on real tokens
        b, c, h, w = x.shape
        s = h * w
        flat = self.norm(x).reshape(b, c, s).transpose(1, 2)  # [B, S, C]
        hd = c // self.heads

        def split(z: torch.Tensor) -> torch.Tensor:
            return z.reshape(b, -1, self.heads, hd).transpose(1, 2)  # [B, heads, len, hd]

        q = split(self.to_q(flat))
        k = split(self.to_k(cond))
        v = split(self.to_v(cond))
        logits = (q @ k.transpose(-1, -2)) / (hd ** 0.5)  # [B, heads, S, T]
        logits = logits.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        maps = torch.softmax(logits, dim=-1)
        out = (maps @ v).transpose(1, 2).reshape(b, s, c)
        out = self.proj(out).transpose(1, 2).reshape(b, c, h, w)
        return x + out, maps


class CondUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dtype = config.torch_dtype()
        C = config.base_channels
        t_dim = C * 4
        self.t_dim = t_dim
        self.t_mlp = nn.Sequential(nn.Linear(t_dim, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))
        self.embed = TokenEmbedding(config.vocab_size, config.d_cond, config.max_tokens)

        chans = [C * m for m in config.channel_mults]
        self.conv_in = nn.Conv2d(3, chans[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        for i, ch in enumerate(chans):
            c_in = chans[max(i - 1, 0)]
            self.down_blocks.append(ResBlock(c_in, ch, t_dim))
            self.down_attn.append(
                CrossAttentionBlock(ch, config.d_cond, config.heads)
                if i in config.attn_levels
                else None
            )
            self.downsamplers.append(
                nn.Conv2d(ch, ch, 3, stride=2, padding=1) if i < len(chans) - 1 else None
            )
        self.mid = ResBlock(chans[-1], chans[-1], t_dim)
        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        for i in reversed(range(len(chans))):
            c_skip = chans[i]
            c_out = chans[max(i - 1, 0)]
            self.up_blocks.append(ResBlock(chans[i] + c_skip, c_out, t_dim))
            self.up_attn.append(
                CrossAttentionBlock(c_out, config.d_cond, config.heads)
                if i in config.attn_levels and i != len(chans) - 1
                else None
            )
            self.upsamplers.append(
                nn.Upsample(scale_factor=2, mode="nearest") if i > 0 else None
            )
        self.norm_out = nn.GroupNorm(math.gcd(8, chans[0]), chans[0])
        self.conv_out = nn.Conv2d(chans[0], 3, 3, padding=1)
        self.to(dtype)

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        tokens: torch.Tensor,
        key_mask: torch.Tensor,
        positions: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        """Returns (predicted noise, {layer tag: [B, heads, S, T] attention maps})."""
        dtype = x.dtype
        if positions is None:
            positions = torch.zeros_like(tokens)
        t_emb = self.t_mlp(timestep_embedding(t, self.t_dim, dtype))
        cond = self.embed(tokens, positions).to(dtype)
        bundles: dict[str, torch.Tensor] = {}

        h = self.conv_in(x)
        skips = []
        size = self.config.image_size
        for i, block in enumerate(self.down_blocks):
            h = block(h, t_emb)
            if self.down_attn[i] is not None:
                h, maps = self.down_attn[i](h, cond, key_mask)
                tag = "mid" if i == len(self.down_blocks) - 1 else "down"
                bundles[f"{tag}{size}"] = maps
            skips.append(h)
            if self.downsamplers[i] is not None:
                h = self.downsamplers[i](h)
                size //= 2

        h = self.mid(h, t_emb)
        for j, block in enumerate(self.up_blocks):
            h = block(torch.cat([h, skips.pop()], dim=1), t_emb)
            if self.up_attn[j] is not None:
                h, maps = self.up_attn[j](h, cond, key_mask)
                bundles[f"up{size}"] = maps
            if self.upsamplers[j] is not None:
                h = self.upsamplers[j](h)
                size *= 2

        return self.conv_out(F.silu(self.norm_out(h))), bundles

    def coarsest_attention_layer(self) -> str:
        size = self.config.image_size // (2 ** (len(self.config.channel_mults) - 1))
        return f"mid{size}"
