import numpy as np
import pytest

from voxfec.channel import LossTrace, gen_bernoulli
from voxfec.frontend import PcmClip
from voxfec.packets import FecConfig
from voxfec.pipeline import decode_stream, encode_stream, run_receiver, simulate_stream
from voxfec.receiver import (
    LostPacket,
    ProtocolError,
    Receiver,
    ReceiverConfig,
)


def make_clip(n_samples, seed=0, scale=3000):
    rng = np.random.default_rng(seed)
    return PcmClip(rng.normal(0, scale, n_samples).clip(-32768, 32767).astype(np.int16))


def encode_for(model, n_frames, fec, q_lambda=32, seed=0):
    clip = make_clip(n_frames * model.d_l, seed)
    return clip, encode_stream(clip, model, q_lambda, fec)


def trace_from_flags(flags):
    return LossTrace(np.asarray(flags, dtype=bool), "file")


FEC = FecConfig(1, (1, 13))


def test_passthrough_no_losses_zero_delay(tiny_model):
    clip, res = encode_for(tiny_model, 30, FEC)
    rx = Receiver(tiny_model, ReceiverConfig(FEC, playout_delay=0))
    for p in res.packets:
        out = rx.ingest(p)
        assert len(out) == 1  # emitted immediately
        assert out[0].path == "entropy"
        assert out[0].code.frame_index == p.frame_index
    left, report = rx.finalize()
    assert left == []
    assert report.entropy_count == 30
    assert report.plc_high_count == report.plc_low_count == 0
    assert report.z_recovery_rate == 1.0


def test_single_loss_recovered_from_next_packet(tiny_model):
    clip, res = encode_for(tiny_model, 40, FEC)
    flags = np.zeros(40, dtype=bool)
    flags[20] = True
    decoded, report = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                                   ReceiverConfig(FEC))
    assert [d.code.frame_index for d in decoded] == list(range(40))
    assert decoded[20].path == "plc_high"
    assert report.plc_high_count == 1 and report.plc_low_count == 0
    # concealment output is the broadcast decoded summary (zero tokens)
    from voxfec.hyperprior import hyper_synthesis, rvq_decode
    si = dict(res.packets[21].z_blocks)[1]
    z_hat = rvq_decode(si, tiny_model.codebooks, tiny_model.tokens.m_z)
    want = hyper_synthesis(z_hat, tiny_model).mu
    assert np.allclose(decoded[20].code.coeffs, want)


def test_burst_14_forces_low_confidence(tiny_model):
    clip, res = encode_for(tiny_model, 60, FEC)
    flags = np.zeros(60, dtype=bool)
    flags[20:34] = True  # burst of 14
    decoded, report = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                                   ReceiverConfig(FEC))
    assert report.plc_low_count >= 1
    assert decoded[20].path == "plc_low"  # first of the burst has no copy left


def test_burst_within_13_all_high(tiny_model):
    clip, res = encode_for(tiny_model, 60, FEC)
    for b in (1, 5, 13):
        flags = np.zeros(60, dtype=bool)
        flags[20 : 20 + b] = True
        decoded, report = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                                       ReceiverConfig(FEC))
        lost_paths = {decoded[t].path for t in range(20, 20 + b)}
        assert lost_paths == {"plc_high"}, b


def test_cold_start_loss_is_low_and_zero(tiny_model):
    clip, res = encode_for(tiny_model, 20, FecConfig(1, ()))
    flags = np.zeros(20, dtype=bool)
    flags[0] = True
    decoded, _ = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                              ReceiverConfig(FecConfig(1, ()), playout_delay=0))
    assert decoded[0].path == "plc_low"
    assert np.all(decoded[0].code.coeffs == 0.0)  # no history, zero tokens


def test_out_of_order_rejected(tiny_model):
    rx = Receiver(tiny_model, ReceiverConfig(FEC))
    with pytest.raises(ProtocolError, match="out-of-order"):
        rx.ingest(LostPacket(3))


def test_emission_in_order_gap_free(tiny_model):
    clip, res = encode_for(tiny_model, 50, FEC)
    trace = gen_bernoulli(0.4, 50, seed=13)
    decoded, report = run_receiver(res.packets, trace, tiny_model, ReceiverConfig(FEC))
    assert [d.code.frame_index for d in decoded] == list(range(50))
    assert report.frames == 50
    assert report.entropy_count + report.plc_high_count + report.plc_low_count == 50


def test_received_frames_decode_identically_under_loss(tiny_model):
    # per-frame conditioning: a received frame's output never depends on
    # its neighbours' fate
    clip, res = encode_for(tiny_model, 80, FEC)
    clean = decode_stream(res.packets, tiny_model, ReceiverConfig(FEC), len(clip))
    rng = np.random.default_rng(7)
    for seed in range(10):
        trace = gen_bernoulli(0.3, 80, seed=seed)
        sim = simulate_stream(res.packets, trace, tiny_model, ReceiverConfig(FEC), len(clip))
        for t in range(80):
            if not trace.flags[t]:
                assert np.array_equal(sim.codes[t], clean.codes[t]), t


def test_zero_delay_drops_late_backups(tiny_model):
    # with no playout buffering, a lost frame is concealed low-confidence
    # even though its summary arrives one packet later
    clip, res = encode_for(tiny_model, 30, FEC)
    flags = np.zeros(30, dtype=bool)
    flags[10] = True
    decoded, _ = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                              ReceiverConfig(FEC, playout_delay=0))
    assert decoded[10].path == "plc_low"


def test_delay_one_recovers_from_offset_one(tiny_model):
    clip, res = encode_for(tiny_model, 30, FEC)
    flags = np.zeros(30, dtype=bool)
    flags[10] = True
    decoded, _ = run_receiver(res.packets, trace_from_flags(flags), tiny_model,
                              ReceiverConfig(FEC, playout_delay=1))
    assert decoded[10].path == "plc_high"


def test_all_lost_outputs_decay_to_silence(tiny_model):
    clip, res = encode_for(tiny_model, 25, FEC)
    flags = np.ones(25, dtype=bool)
    sim = simulate_stream(res.packets, trace_from_flags(flags), tiny_model,
                          ReceiverConfig(FEC), len(clip))
    assert sim.report.plc_low_count + sim.report.plc_high_count == 25
    assert sim.report.entropy_count == 0
    assert np.all(np.isfinite(sim.codes))


def test_trace_shorter_than_stream_rejected(tiny_model):
    clip, res = encode_for(tiny_model, 30, FEC)
    short = trace_from_flags(np.zeros(10, dtype=bool))
    with pytest.raises(ValueError, match="trace has 10"):
        run_receiver(res.packets, short, tiny_model, ReceiverConfig(FEC))


def test_finalize_empty_stream(tiny_model):
    rx = Receiver(tiny_model, ReceiverConfig(FEC))
    final, report = rx.finalize()
    assert final == []
    assert report.frames == 0
    assert report.entropy_count == report.plc_high_count == report.plc_low_count == 0


def test_loss_masks_record(tiny_model):
    clip, res = encode_for(tiny_model, 40, FEC)
    flags = np.zeros(40, dtype=bool)
    flags[20] = True
    flags[30] = True
    rx = Receiver(tiny_model, ReceiverConfig(FEC))
    for t, p in enumerate(res.packets):
        rx.ingest(LostPacket(t) if flags[t] else p)
    rx.finalize()
    assert len(rx.masks) == 40
    assert not rx.masks[0].y_lost and rx.masks[0].z_fully_available
    assert rx.masks[20].y_lost and rx.masks[20].z_fully_available
    assert rx.masks[20].z_stage_masked == (False,)
    assert rx.masks[30].y_lost


def test_finalize_flushes_delay_window(tiny_model):
    clip, res = encode_for(tiny_model, 20, FEC)
    rx = Receiver(tiny_model, ReceiverConfig(FEC, playout_delay=13))
    emitted = []
    for p in res.packets:
        emitted += rx.ingest(p)
    assert len(emitted) == 20 - 13
    final, report = rx.finalize()
    assert len(final) == 13
    assert report.frames == 20
