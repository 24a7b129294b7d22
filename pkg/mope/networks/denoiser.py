from mope import graph as g
from mope.graph import NetworkSpec


def build_denoiser():
    """Encoder-decoder denoiser with an average filter in front.

    Widths double at each stride-2 stage (16 -> 32 -> 64) and halve on the way
    back up; decoder stages add the encoder feature map of matching width.
    """
    layers = (
        g.box_filter(),                       # 0
        g.conv(3, 16),                        # 1
        g.leaky_relu(),                       # 2  16-channel stage
        g.conv(16, 32, stride=2),             # 3
        g.leaky_relu(),                       # 4  32-channel stage
        g.conv(32, 64, stride=2),             # 5
        g.leaky_relu(),                       # 6
        g.conv_transpose(64, 32, match=4),    # 7
        g.add_skip(4),                        # 8
        g.leaky_relu(),                       # 9
        g.conv_transpose(32, 16, match=2),    # 10
        g.add_skip(2),                        # 11
        g.leaky_relu(),                       # 12
        g.conv(16, 3),                        # 13
        g.sigmoid(),                          # 14
    )
    return NetworkSpec("denoiser", 3, layers)
