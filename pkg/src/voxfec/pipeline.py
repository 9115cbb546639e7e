"""End-to-end encode / simulate / decode glue shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import LossTrace
from .frontend import PcmClip, frame_decode, frame_encode
from .hyperprior import CodecModel, hyper_analysis, hyper_synthesis, rvq_decode, rvq_encode
from .packets import (
    BitrateReport,
    FecConfig,
    Packet,
    StreamHeader,
    account_stream,
    build_packet,
)
from .rangecoder import DEFAULT_TABLE_CACHE, TableCache, build_cdf, encode_frame
from .receiver import DecodedFrame, LostPacket, Receiver, ReceiverConfig, ReceiverReport
from .transform import RateControl, analysis, lambda_from_q, quantize, step_from_lambda, synthesis


@dataclass(frozen=True)
class EncodeResult:
    packets: list[Packet]
    header: StreamHeader
    y_ref: np.ndarray  # (frames, d_y) pre-quantization latent codes
    report: BitrateReport | None


@dataclass(frozen=True)
class SimResult:
    clip: PcmClip
    codes: np.ndarray  # (frames, d_y) emitted latent codes
    paths: list[str]
    report: ReceiverReport


def encode_stream(
    clip: PcmClip,
    model: CodecModel,
    q_lambda: int,
    fec: FecConfig,
    table_cache: TableCache | None = None,
) -> EncodeResult:
    """Run the sender: frame, transform, summarize, quantize, pack."""
    rc = RateControl(q_lambda)
    step = step_from_lambda(lambda_from_q(rc))
    frames = frame_encode(clip, model.d_l)
    y_ref = np.empty((len(frames), model.d_y))
    z_cache = {}
    tables_cache = DEFAULT_TABLE_CACHE if table_cache is None else table_cache
    model_crc = model.content_crc
    packets = []
    for f in frames:
        t = f.frame_index
        y = analysis(f)
        y_ref[t] = y.coeffs
        if fec.q > 0:
            z = hyper_analysis(y.coeffs, model.d_z)
            si = rvq_encode(z, model.codebooks, fec.q, t)
            z_hat = rvq_decode(si, model.codebooks, model.tokens.m_z)
            z_cache[t] = si
            key = (model_crc, si.indices, q_lambda)
        else:
            z_hat = np.zeros(model.d_z)
            key = (model_crc, (), q_lambda)
        tables = tables_cache.get(key)
        if tables is None:
            # the decoder rebuilds the same tables from the same decoded
            # summary, which is what makes the payload decodable
            theta = hyper_synthesis(z_hat, model)
            tables = build_cdf(theta, step)
            tables_cache.put(key, tables)
        yq = quantize(y, step)
        payload = encode_frame(yq, tables)
        packets.append(build_packet(t, payload, z_cache, fec, q_lambda))
        horizon = t - fec.max_offset
        stale = [k for k in z_cache if k < horizon]
        for k in stale:
            del z_cache[k]
    report = account_stream(packets, fec.frame_rate) if len(packets) >= fec.frame_rate else None
    header = StreamHeader(
        model_crc=model.content_crc,
        q_lambda=q_lambda,
        fec=fec,
        sample_count=len(clip),
        frame_count=len(packets),
    )
    return EncodeResult(packets, header, y_ref, report)


def run_receiver(
    packets: list[Packet],
    trace: LossTrace | None,
    model: CodecModel,
    config: ReceiverConfig,
) -> tuple[list[DecodedFrame], ReceiverReport]:
    """Feed packets (or their loss markers) through a fresh receiver."""
    if trace is not None and len(trace) < len(packets):
        raise ValueError(
            f"trace has {len(trace)} entries for {len(packets)} packets"
        )
    rx = Receiver(model, config)
    decoded: list[DecodedFrame] = []
    for t, pkt in enumerate(packets):
        lost = bool(trace.flags[t]) if trace is not None else False
        decoded.extend(rx.ingest(LostPacket(t) if lost else pkt))
    final, report = rx.finalize()
    decoded.extend(final)
    return decoded, report


def simulate_stream(
    packets: list[Packet],
    trace: LossTrace | None,
    model: CodecModel,
    config: ReceiverConfig,
    sample_count: int,
    y_ref: np.ndarray | None = None,
) -> SimResult:
    """Receiver run plus waveform reconstruction and per-path latent MSE."""
    decoded, report = run_receiver(packets, trace, model, config)
    codes = np.stack([d.code.coeffs for d in decoded]) if decoded else np.empty((0, model.d_y))
    paths = [d.path for d in decoded]
    frames = [synthesis(d.code) for d in decoded]
    clip = frame_decode(frames, sample_count)
    if y_ref is not None:
        report = replace(report, mse_by_path=latent_mse_by_path(codes, paths, y_ref))
    return SimResult(clip, codes, paths, report)


def decode_stream(
    packets: list[Packet], model: CodecModel, config: ReceiverConfig, sample_count: int
) -> SimResult:
    """Loss-free decode of a container."""
    return simulate_stream(packets, None, model, config, sample_count)


def latent_mse_by_path(
    codes: np.ndarray, paths: list[str], y_ref: np.ndarray
) -> dict[str, float]:
    """Mean per-frame latent MSE grouped by decode path."""
    if codes.shape != y_ref.shape:
        raise ValueError(f"code shape {codes.shape} != reference {y_ref.shape}")
    per_frame = np.mean((codes - y_ref) ** 2, axis=1)
    out: dict[str, float] = {}
    for path in sorted(set(paths)):
        mask = np.array([p == path for p in paths])
        out[path] = float(per_frame[mask].mean())
    return out
