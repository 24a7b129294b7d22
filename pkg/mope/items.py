# Records emitted by training, routing and evaluation
#
# Each record knows its CSV header (`fields`) and how to turn itself into a
# row; the export pipelines in mope/pipelines.py consume them.

from dataclasses import astuple, dataclass, fields


class Item:
    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def as_row(self):
        return list(astuple(self))


@dataclass
class LossItem(Item):
    # Adversarial denoiser training
    iteration: int
    loss_d: float
    loss_g: float
    loss_sim: float
    lr: float


@dataclass
class GateItem(Item):
    iteration: int
    loss_gate: float
    batch_accuracy: float
    lr: float


@dataclass
class ClassifierItem(Item):
    iteration: int
    loss: float
    batch_accuracy: float
    lr: float


@dataclass
class DecisionItem(Item):
    image_id: str
    score: float
    expert: str


@dataclass
class EvalItem(Item):
    model: str
    condition: str
    accuracy: float


@dataclass
class FidelityItem(Item):
    route: str
    mse: float
    psnr: float
