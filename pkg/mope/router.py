"""
Inference-time mixture of pre-processing experts: the gate scores an image
and exactly one expert (identity, average filter or denoiser) processes it.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from mope import ops
from mope.graph import Model, forward
from mope.losses import gate_scores
from mope.settings import GATE_THRESHOLD

logger = logging.getLogger(__name__)


class Expert(str, Enum):
    IDENTITY = "identity"
    AVERAGE_FILTER = "average_filter"
    DENOISER = "denoiser"

    @classmethod
    def parse(cls, value):
        """Accept enum values plus the CLI spellings 'avg' and 'denoise'."""
        aliases = {"avg": cls.AVERAGE_FILTER, "denoise": cls.DENOISER}
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        return cls(value)


@dataclass(frozen=True)
class MopeConfig:
    threshold: float = GATE_THRESHOLD
    noisy_expert: Expert = Expert.DENOISER

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.noisy_expert == Expert.IDENTITY:
            raise ValueError("the noisy expert must be the average filter or the denoiser")


@dataclass(frozen=True)
class GateDecision:
    score: float
    chosen_expert: Expert
    patch_min: float
    patch_mean: float
    patch_max: float


def select_expert(score, cfg):
    # ties go to the noisy expert
    return Expert.IDENTITY if score > cfg.threshold else cfg.noisy_expert


def _decisions(patch_maps, cfg):
    scores = gate_scores(patch_maps)
    return [
        GateDecision(
            score=float(score),
            chosen_expert=select_expert(float(score), cfg),
            patch_min=float(patch_map.min()),
            patch_mean=float(score),
            patch_max=float(patch_map.max()),
        )
        for score, patch_map in zip(scores, patch_maps)
    ]


def gate_decide(gate, image, cfg=MopeConfig()):
    """Decision for a single (1, c, h, w) image."""
    patch_map = forward(gate.network, gate.params, image)[0]
    return _decisions(patch_map, cfg)[0]


@dataclass
class Mope:
    gate: Model
    denoiser: Optional[Model] = None
    cfg: MopeConfig = MopeConfig()

    def __post_init__(self):
        if self.cfg.noisy_expert == Expert.DENOISER and self.denoiser is None:
            raise ValueError("the denoiser expert needs a denoiser model")

    def run_expert(self, expert, images):
        if expert == Expert.IDENTITY:
            return images.copy()
        if expert == Expert.AVERAGE_FILTER:
            return ops.box_filter3(images)
        return self.denoiser(images)

    def decide(self, image):
        return gate_decide(self.gate, image, self.cfg)

    def preprocess(self, image, force=None):
        """Route one image; `force` bypasses the gate with a fixed expert."""
        if force is not None:
            return self.run_expert(Expert.parse(force), image)
        return self.run_expert(self.decide(image).chosen_expert, image)

    def preprocess_batch(self, images, force=None):
        """Route every image independently; returns (outputs, decisions)."""
        if images.shape[0] == 0:
            return images.copy(), []
        if force is not None:
            return self.run_expert(Expert.parse(force), images), []
        decisions = _decisions(forward(self.gate.network, self.gate.params, images)[0], self.cfg)
        outputs = np.empty_like(images)
        for expert in (Expert.IDENTITY, Expert.AVERAGE_FILTER, Expert.DENOISER):
            members = [i for i, d in enumerate(decisions) if d.chosen_expert == expert]
            if members:
                outputs[members] = self.run_expert(expert, images[members])
        logger.debug(
            "Routed %d images, %d to identity",
            len(decisions),
            sum(d.chosen_expert == Expert.IDENTITY for d in decisions),
        )
        return outputs, decisions
