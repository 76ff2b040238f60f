"""quantmimo: detection and link-level simulation for uplink massive MIMO
receivers with low-resolution ADCs.

The package covers the full chain: constellation/channel modeling, the
uniform few-bit and sign one-bit ADC, exact and sigmoid-reformulated
maximum-likelihood detection, the trainable unfolded detectors OBMNet and
FBMNet, and a reproducible Monte-Carlo BER harness with CSV/JSON output
and rendered figures.
"""

__version__ = "0.1.0"

from .mimo import (  # noqa: F401
    Constellation,
    SystemConfig,
    TransmitVector,
    augment,
    constellation,
    db_to_linear,
    demap_nearest,
    linear_to_db,
    modulate,
    sample_channel,
    stack_complex,
    transmit,
    unstack_real,
)
from .quantizer import (  # noqa: F401
    BinBounds,
    QuantizerConfig,
    bin_bounds,
    default_step,
    quantize,
    sign_quantize,
)
from .likelihood import (  # noqa: F401
    SIGMOID_CDF_SCALE,
    grad_fewbit,
    grad_onebit,
    loglik_fewbit_approx,
    loglik_fewbit_exact,
    loglik_onebit_exact,
    obj_onebit_approx,
    onebit_effective_channel,
    sigmoid,
    std_normal_cdf,
)
from .detectors import DetectionResult, exhaustive_ml, zf_detect  # noqa: F401
from .nets import (  # noqa: F401
    AdamState,
    NetParams,
    TrainConfig,
    adam_step,
    fbmnet_forward,
    load_params,
    net_detect,
    obmnet_forward,
    obmnet_normalize,
    save_params,
    train,
)
from .bench import (  # noqa: F401
    BerResult,
    DetectorSpec,
    SweepConfig,
    ber_sweep,
    clopper_pearson,
    compare_ml,
    write_results,
)
