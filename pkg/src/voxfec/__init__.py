"""Loss-resilient speech transport simulator.

Latent transform coding with a scalar-quantized Gaussian entropy model,
fixed-length side information reused as both entropy-coder conditioning and
in-band redundancy, confidence-tagged concealment of lost frames, packet
loss channel models, and an evaluation harness.
"""

from .channel import (
    BernoulliParams,
    LossTrace,
    Markov3Params,
    PRESETS,
    gen_bernoulli,
    gen_markov3,
    load_trace,
    save_trace,
    stationary_loss_rate,
    trace_stats,
)
from .frontend import (
    FRAME_SAMPLES,
    LatentFrame,
    PcmClip,
    SAMPLE_RATE,
    frame_decode,
    frame_encode,
    read_wav,
    write_wav,
)
from .hyperprior import (
    CodecModel,
    ConfidenceTokens,
    GaussianParams,
    RvqCodebooks,
    SideInfo,
    apply_confidence,
    calibrate,
    compose_latent,
    hyper_analysis,
    hyper_synthesis,
    load_model,
    plc_predict,
    rvq_decode,
    rvq_encode,
    save_model,
)
from .metrics import WaveMetrics, compute_metrics
from .packets import (
    BitrateReport,
    FecConfig,
    Packet,
    account_stream,
    build_packet,
    parse,
    prob_all_copies_lost,
    read_container,
    redundancy_bitrate,
    serialize,
    total_sideinfo_bitrate,
    write_container,
)
from .pipeline import decode_stream, encode_stream, run_receiver, simulate_stream
from .rangecoder import (
    Bitstream,
    CdfTable,
    DecodeFailure,
    build_cdf,
    decode_frame,
    encode_frame,
    measure_rate,
)
from .receiver import (
    DecodedFrame,
    LossMasks,
    LostPacket,
    ProtocolError,
    Receiver,
    ReceiverConfig,
    ReceiverReport,
)
from .transform import (
    LatentCode,
    QuantizedLatent,
    RateControl,
    analysis,
    dequantize,
    lambda_from_q,
    quantize,
    step_from_lambda,
    synthesis,
)

__version__ = "0.1.0"
