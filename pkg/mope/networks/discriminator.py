from mope.graph import NetworkSpec
from mope.networks.gating import patch_classifier_layers


def build_discriminator():
    # Same topology as the gate, trained with its own parameters
    return NetworkSpec("discriminator", 3, patch_classifier_layers())
