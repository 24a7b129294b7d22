# Default settings for the mope project
#
# Every value here can be overridden from a config file section or from a
# command-line flag of the same name (see mope/config.py and mope.cfg).

# Root for run outputs when neither --out-dir nor MOPE_OUT_DIR is given
OUT_DIR = "runs"
OUT_DIR_ENV = "MOPE_OUT_DIR"

SEED = 0

# Operators
INSTANCE_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.2

# Weight files
WEIGHTS_MAGIC = b"MOPE"
WEIGHTS_VERSION = 1

# Synthetic data
NUM_CLASSES = 10
IMAGE_SIZE = 64
SAMPLES_PER_CLASS = 200
TRAIN_FRACTION = 0.8
DATA_WORKERS = 1

# Distortion (max_sigma = 0.15 is the training maximum; images live in [0, 1])
MAX_SIGMA = 0.15
LOWRES_FACTORS = (2, 4)
EVAL_SIGMA = 0.15
EVAL_LOWRES_FACTOR = 4

# Routing
GATE_THRESHOLD = 0.5
NOISY_EXPERT = "denoise"

# Gate training
GATE_ITERATIONS = 2000
GATE_BATCH_SIZE = 16
GATE_LR = 1e-3

# Adversarial denoiser training
DENOISER_ITERATIONS = 5000
DENOISER_BATCH_SIZE = 8
DENOISER_LR = 1e-3
# The generator fits the similarity loss alone for the first ADV_WARMUP
# iterations (the discriminator still trains); the rate then drops by 100, later by 10.
DENOISER_ADV_WARMUP = 2500
DENOISER_LR_SCHEDULE = ((2500, 100.0), (4000, 10.0))
LAMBDA_SIM = 1.0

# Adam defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Proxy classifier (SGD with momentum, lr divided by 10 at the listed iterations)
CLASSIFIER_ITERATIONS = 3000
CLASSIFIER_BATCH_SIZE = 32
CLASSIFIER_LR = 0.02
CLASSIFIER_LR_SCHEDULE = ((1000, 10.0), (2000, 10.0))
MOMENTUM = 0.9

# MoPE fine-tuning starts from the clean-only classifier at a reduced rate
FINETUNE_ITERATIONS = 1000
FINETUNE_LR = 2e-3

# Complexity analysis
ANALYZE_INPUT_SIZE = 244
# Reference detector budget used for overhead percentages (300-proposal detector)
REFERENCE_PARAMS_MB = 42.0
REFERENCE_GFLOP = 116.0

# Progress / logging
LOG_EVERY = 100
LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s: %(message)s"
