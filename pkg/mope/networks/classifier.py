from mope import graph as g
from mope.graph import NetworkSpec


def build_classifier(num_classes):
    """Small proxy classifier for 64x64 images; output is (n, num_classes, 1, 1)."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    layers = (
        g.conv(3, 16, stride=2),
        g.leaky_relu(),
        g.conv(16, 32, stride=2),
        g.leaky_relu(),
        g.conv(32, 64, stride=2),
        g.leaky_relu(),
        g.global_pool(),
        g.conv(64, num_classes, kernel=1),
    )
    return NetworkSpec("classifier", 3, layers)


def logits(output):
    """Flatten the classifier's (n, k, 1, 1) output to (n, k)."""
    return output.reshape(output.shape[0], -1)
