# Concrete network specifications, one module per network
from dataclasses import dataclass

from mope.graph import NetworkSpec
from mope.networks.classifier import build_classifier
from mope.networks.denoiser import build_denoiser
from mope.networks.discriminator import build_discriminator
from mope.networks.gating import build_gating
from mope.settings import NUM_CLASSES


@dataclass(frozen=True)
class ModelCatalog:
    denoiser: NetworkSpec
    gating: NetworkSpec
    discriminator: NetworkSpec
    classifier: NetworkSpec


def catalog(num_classes=NUM_CLASSES):
    return ModelCatalog(
        denoiser=build_denoiser(),
        gating=build_gating(),
        discriminator=build_discriminator(),
        classifier=build_classifier(num_classes),
    )


__all__ = [
    "ModelCatalog",
    "build_classifier",
    "build_denoiser",
    "build_discriminator",
    "build_gating",
    "catalog",
]
