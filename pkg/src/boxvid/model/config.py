"""Architecture hyperparameters for the toy video UNet and its add-ons."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..vocab import VOCAB


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale defaults: a 2-level UNet on 16x16x48 latents of 8-frame
    64x64 RGB videos (space-to-depth codec, block 4), one spatial transformer
    and one temporal attention layer per level in the encoder, convolutional
    decoder with control-residual injection."""

    base_channels: int = 64
    level_multipliers: tuple[int, ...] = (1, 2)
    frames: int = 8
    latent_size: int = 16
    codec_block: int = 4
    text_embed_dim: int = 64
    text_length: int = 8
    attention_head_dim: int = 32
    ff_mult: int = 2
    norm_groups: int = 8
    motion_channels: int = 64
    control_divisor: int = 4
    # fixed gain after the zero-initialized projections: keeps init-neutrality
    # exact while letting small weight updates move the output meaningfully
    injection_gain: float = 8.0
    # the frozen base is random, not pretrained; identity-leaning init makes it
    # start as eps ~= z (the correct high-noise behavior a pretrained base
    # would supply), with residual branches scaled down so the copy dominates
    identity_init: bool = True
    branch_scale: float = 0.25
    vocab_size: int = field(default=len(VOCAB))

    def __post_init__(self):
        if self.frames < 1 or self.latent_size < 1 or self.base_channels < 1:
            raise ValueError("invalid-config: dimensions must be positive")
        if len(self.level_multipliers) < 1:
            raise ValueError("invalid-config: need at least one level")
        for width in self.channel_widths:
            if width % self.attention_head_dim != 0:
                raise ValueError(
                    f"invalid-config: head dim {self.attention_head_dim} does not "
                    f"divide attention width {width}"
                )
            if width % self.norm_groups != 0:
                raise ValueError(
                    f"invalid-config: norm groups {self.norm_groups} do not divide {width}"
                )
            if width % self.control_divisor != 0:
                raise ValueError(
                    f"invalid-config: control divisor {self.control_divisor} does not "
                    f"divide {width}"
                )

    @property
    def channel_widths(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.level_multipliers)

    @property
    def latent_channels(self) -> int:
        return 3 * self.codec_block ** 2

    @property
    def pixel_size(self) -> int:
        return self.latent_size * self.codec_block

    @property
    def time_embed_dim(self) -> int:
        return self.base_channels * 2

    @property
    def num_levels(self) -> int:
        return len(self.level_multipliers)

    @property
    def level_sizes(self) -> tuple[int, ...]:
        """Spatial side length at each level, halved per downsample."""
        return tuple(self.latent_size // (2 ** i) for i in range(self.num_levels))

    @property
    def site_resolutions(self) -> tuple[tuple[int, int], ...]:
        """(h, w) of every spatial-transformer site, one per level."""
        return tuple((s, s) for s in self.level_sizes)


def tiny_config(**overrides) -> ModelConfig:
    """Small config for fast tests: 2 frames, 8x8 latents, 32x32 pixels."""
    kwargs = dict(
        base_channels=16,
        level_multipliers=(1, 2),
        frames=2,
        latent_size=8,
        codec_block=4,
        text_embed_dim=16,
        text_length=8,
        attention_head_dim=8,
        norm_groups=4,
        motion_channels=16,
        control_divisor=4,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)
