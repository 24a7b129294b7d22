from mope import graph as g
from mope.graph import NetworkSpec


def patch_classifier_layers():
    # receptive field 1 + 2*1 + 2*2 + 2*4 + 2*8 = 31
    return (
        g.conv(3, 16, stride=2),
        g.leaky_relu(),
        g.conv(16, 32, stride=2),
        g.instance_norm(),
        g.leaky_relu(),
        g.conv(32, 64, stride=2),
        g.instance_norm(),
        g.leaky_relu(),
        g.conv(64, 1, stride=1),
        g.sigmoid(),
    )


def build_gating():
    """Patch-based clean/noisy scorer; each output covers a 31x31 window."""
    return NetworkSpec("gating", 3, patch_classifier_layers())
