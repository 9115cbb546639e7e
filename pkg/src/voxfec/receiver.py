"""Streaming receiver: side-info reassembly, decode-path routing, playout.

Events (received packets or loss markers) arrive strictly in frame order.
Every received packet refreshes the side-info cache with all the blocks it
carries, including backups for earlier frames. A frame is emitted once the
newest event index is at least `playout_delay` ahead of it, at which point
its decode path is final:

  entropy   packet received and payload decoded against the frame's own
            side info (conditioning never spans neighbouring frames, so a
            received frame decodes the same bytes under any loss pattern)
  plc_high  packet lost but some copy of its side info was cached; output
            is the summary-driven prediction plus the high-confidence token
  plc_low   nothing cached; output decays the previous emitted latent and
            adds the low-confidence token

Every frame always yields output, in order and gap-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hyperprior import (
    CodecModel,
    SideInfo,
    apply_confidence,
    compose_latent,
    hyper_synthesis,
    plc_predict,
    rvq_decode,
)
from .packets import FecConfig, Packet
from .rangecoder import (
    DEFAULT_TABLE_CACHE,
    CdfTable,
    DecodeFailure,
    TableCache,
    build_cdf,
    decode_frame,
)
from .transform import LatentCode, RateControl, dequantize, lambda_from_q, step_from_lambda

PATH_ENTROPY = "entropy"
PATH_PLC_HIGH = "plc_high"
PATH_PLC_LOW = "plc_low"


class ProtocolError(Exception):
    """Receiver contract violation (events out of frame order)."""


@dataclass(frozen=True)
class LostPacket:
    """Loss marker produced by the channel for a dropped frame."""

    frame_index: int


@dataclass(frozen=True)
class LossMasks:
    """Per-frame record of what was missing when the frame was emitted.

    y_lost is true when the packet was lost or its payload undecodable;
    z_stage_masked holds one flag per side-info stage (all true when no
    copy was cached, since copies are only ever complete).
    """

    y_lost: bool
    z_stage_masked: tuple[bool, ...]
    z_fully_available: bool


@dataclass(frozen=True)
class ReceiverConfig:
    fec: FecConfig
    playout_delay: int | None = None
    entropy_context: int = 1  # conditioning never spans neighbouring frames

    def __post_init__(self):
        if self.entropy_context != 1:
            raise ValueError("entropy context is fixed at one frame")

    @property
    def delay(self) -> int:
        if self.playout_delay is None:
            return self.fec.max_offset
        if self.playout_delay < 0:
            raise ValueError("playout delay must be non-negative")
        return self.playout_delay


@dataclass(frozen=True)
class DecodedFrame:
    code: LatentCode
    path: str


@dataclass(frozen=True)
class ReceiverReport:
    frames: int
    entropy_count: int
    plc_high_count: int
    plc_low_count: int
    z_recovery_rate: float
    mse_by_path: dict[str, float] = field(default_factory=dict)


class Receiver:
    """One per stream; strictly sequential. See the module docstring."""

    def __init__(
        self,
        model: CodecModel,
        config: ReceiverConfig,
        table_cache: TableCache | None = None,
    ):
        self.model = model
        self.config = config
        self._cache: dict[int, SideInfo] = {}
        self._pending: dict[int, Packet | None] = {}
        self._steps: dict[int, float] = {}
        self._tables = DEFAULT_TABLE_CACHE if table_cache is None else table_cache
        self._model_crc = model.content_crc
        self._next_event = 0
        self._next_emit = 0
        self._newest = -1
        self._last_code: np.ndarray | None = None
        self.paths: list[str] = []
        self.masks: list[LossMasks] = []

    def ingest(self, event: Packet | LostPacket) -> list[DecodedFrame]:
        """Process one in-order event; returns frames that became emittable."""
        t = event.frame_index
        if t != self._next_event:
            raise ProtocolError(
                f"out-of-order event: frame {t}, expected {self._next_event}"
            )
        self._next_event += 1
        self._newest = t
        if isinstance(event, Packet):
            for off, si in event.z_blocks:
                target = t - off
                if target < self._next_emit:
                    continue  # too late to matter; frame already emitted
                if off == 0 or target not in self._cache:
                    self._cache[target] = si
            self._pending[t] = event
        else:
            self._pending[t] = None
        emitted = []
        while self._next_emit <= self._newest - self.config.delay:
            emitted.append(self._emit_next())
        return emitted

    def finalize(self) -> tuple[list[DecodedFrame], ReceiverReport]:
        """Flush frames still inside the delay window and report path counts."""
        emitted = []
        while self._next_emit <= self._newest:
            emitted.append(self._emit_next())
        counts = {PATH_ENTROPY: 0, PATH_PLC_HIGH: 0, PATH_PLC_LOW: 0}
        for p in self.paths:
            counts[p] += 1
        lost = counts[PATH_PLC_HIGH] + counts[PATH_PLC_LOW]
        recovery = counts[PATH_PLC_HIGH] / lost if lost else 1.0
        report = ReceiverReport(
            frames=len(self.paths),
            entropy_count=counts[PATH_ENTROPY],
            plc_high_count=counts[PATH_PLC_HIGH],
            plc_low_count=counts[PATH_PLC_LOW],
            z_recovery_rate=recovery,
        )
        return emitted, report

    def _tables_for(self, si: SideInfo | None, q_lambda: int) -> tuple[CdfTable, float]:
        key = (self._model_crc, si.indices if si is not None else (), q_lambda)
        step = self._steps.get(q_lambda)
        if step is None:
            step = step_from_lambda(lambda_from_q(RateControl(q_lambda)))
            self._steps[q_lambda] = step
        cached = self._tables.get(key)
        if cached is None:
            theta = self._theta_for(si)
            cached = build_cdf(theta, step)
            self._tables.put(key, cached)
        return cached, step

    def _theta_for(self, si: SideInfo | None):
        model = self.model
        if si is None:
            z_hat = np.zeros(model.d_z)
        else:
            z_hat = rvq_decode(si, model.codebooks, model.tokens.m_z)
        return hyper_synthesis(z_hat, model)

    def _emit_next(self) -> DecodedFrame:
        model = self.model
        t = self._next_emit
        packet = self._pending.pop(t, None)
        si = self._cache.get(t)
        code = None
        path = None
        if packet is not None:
            tables, step = self._tables_for(si, packet.q_lambda)
            try:
                yq = decode_frame(packet.payload, tables, model.d_y)
                y_hat = dequantize(yq, step).coeffs
                code = compose_latent(y_hat, None, lost=False)
                path = PATH_ENTROPY
            except DecodeFailure:
                pass  # fall through to concealment
        if code is None:
            if si is not None:
                theta = self._theta_for(si)
                y_p = plc_predict(theta)
                y_m = apply_confidence(y_p, True, model.tokens)
                path = PATH_PLC_HIGH
            else:
                theta = hyper_synthesis(
                    None, model, prev_yhat=self._last_code, fully_masked=True
                )
                y_p = plc_predict(theta)
                y_m = apply_confidence(y_p, False, model.tokens)
                path = PATH_PLC_LOW
            code = compose_latent(None, y_m, lost=True)
        self._last_code = code
        self._next_emit += 1
        self._cache.pop(t, None)
        self.paths.append(path)
        n_stages = si.stages if si is not None else self.config.fec.q
        self.masks.append(
            LossMasks(
                y_lost=path != PATH_ENTROPY,
                z_stage_masked=(si is None,) * n_stages,
                z_fully_available=si is not None,
            )
        )
        return DecodedFrame(LatentCode(code, t), path)
