import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trayslide.acoustic import (
    AudioClip,
    BinnedSpectrogram,
    GeometryError,
    NoSliding,
    SlidingEvent,
    average_spectrograms,
    binned_spectrogram,
    detect_onset,
    pair_trials,
    read_events,
    read_wav,
    reduce_noise,
    unique_events,
    write_events,
)
from trayslide.constraints import ObjectSpec, PiecewiseLinearAlpha
from trayslide.pipeline import COLLECT_END, COLLECT_START
from trayslide.profiles import cartesian_samples, line_to_joint_trajectory, sample_profile, scurve_plan
from trayslide.simulator import GroundTruthFriction, SynthParams, simulate_transport, synth_audio, write_wav

SR = 44100


def white(n, seed=0, sigma=0.1):
    return AudioClip(np.random.default_rng(seed).normal(0, sigma, n), SR)


def test_tone_lands_in_cell_ten():
    t = np.arange(SR // 2) / SR
    spec = binned_spectrogram(AudioClip(np.sin(2 * np.pi * 1000 * t), SR))
    mean = spec.magnitudes[5:-5].mean(axis=0)
    assert spec.shape[1] == 220 and spec.freq_bin == pytest.approx(100.0)
    assert int(np.argmax(mean)) == 10
    others = np.delete(mean, [9, 10, 11])
    assert 20 * np.log10(mean[10] / others.max()) >= 20


def test_zero_clip_gives_zero_matrix():
    spec = binned_spectrogram(AudioClip(np.zeros(5000), SR))
    assert spec.magnitudes.shape[0] > 0 and not spec.magnitudes.any()


def test_parseval_white_noise():
    clip = white(SR, seed=1)
    n_fft = 441
    spec = binned_spectrogram(clip, power=True)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, n_fft)[::21]
    frame_energy = np.mean(np.sum((frames * window) ** 2, axis=1))
    cell_energy = np.mean(spec.magnitudes[5:-5].sum(axis=1))
    assert cell_energy == pytest.approx(frame_energy, rel=0.10)


@pytest.mark.parametrize("win_length", [None, 88])
@pytest.mark.parametrize("m", [5, 10, 25])
def test_shift_covariance(m, win_length):
    # one 2 ms bin is 88.2 samples, so m bins is an integer delay when 5 divides m
    clip = white(20000, seed=2)
    delay = int(round(m * 0.002 * SR))
    assert delay == m * 0.002 * SR
    a = binned_spectrogram(clip, win_length=win_length).magnitudes
    b = binned_spectrogram(clip.delayed(delay), win_length=win_length).magnitudes
    interior = slice(8, a.shape[0] - 8)
    np.testing.assert_allclose(b[m:][interior], a[interior], rtol=1e-6, atol=1e-12 * a.max())


def test_geometry_invariants():
    spec = binned_spectrogram(white(4000))
    assert spec.shape[1] * spec.freq_bin <= SR / 2
    assert np.all(spec.magnitudes >= 0)
    with pytest.raises(ValueError):
        binned_spectrogram(AudioClip(np.zeros(100), SR))


def test_self_subtraction():
    noise = binned_spectrogram(white(20000, seed=3))
    out = reduce_noise(noise, noise)
    assert np.all(out.magnitudes <= 0.05 * noise.magnitudes)


def test_burst_retained_and_background_removed():
    noise = binned_spectrogram(white(30000, seed=4, sigma=0.01))
    burst = np.zeros_like(noise.magnitudes)
    cells = (slice(100, 110), slice(30, 60))
    burst[cells] = 10 * noise.magnitudes.mean()
    sig = BinnedSpectrogram(noise.magnitudes + burst, noise.time_bin, noise.freq_bin)
    out = reduce_noise(sig, noise).magnitudes
    assert np.all(out[cells] >= 0.5 * burst[cells])
    mask = burst == 0
    assert np.all(out[mask] <= 0.05 * sig.magnitudes[mask])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (30, 6), elements=st.floats(0, 10)), arrays(np.float64, (30, 6), elements=st.floats(0, 10)))
def test_gating_clamped_and_bounded(s, n):
    sig, noise = BinnedSpectrogram(s, 0.002, 100.0), BinnedSpectrogram(n, 0.002, 100.0)
    out = reduce_noise(sig, noise).magnitudes
    assert np.all(out >= 0) and np.all(out <= s)


def test_gating_geometry_mismatch():
    a = BinnedSpectrogram(np.ones((10, 4)), 0.002, 100.0)
    with pytest.raises(GeometryError):
        reduce_noise(a, BinnedSpectrogram(np.ones((11, 4)), 0.002, 100.0))
    with pytest.raises(GeometryError):
        average_spectrograms([a, BinnedSpectrogram(np.ones((10, 4)), 0.004, 100.0)])


def ramp_profile(t_peak=0.5, n=500):
    t = np.linspace(0, 2 * t_peak, n)
    v = t_peak - np.abs(t - t_peak)
    return t, v, np.ones_like(t)


def test_silent_spectrogram_raises():
    with pytest.raises(NoSliding):
        detect_onset(BinnedSpectrogram(np.zeros((400, 20)), 0.002, 100.0), ramp_profile())


def test_onset_found_and_masked():
    mags = np.full((500, 20), 1e-3)
    mags[200:, 5] += 1.0  # step at bin 200, t = 0.400 .. 0.402
    spec = BinnedSpectrogram(mags, 0.002, 100.0)
    ev = detect_onset(spec, ramp_profile(0.5))
    assert ev.t_sliding == pytest.approx(0.401)
    assert ev.v_sliding_mag == pytest.approx(0.401, abs=2e-3)
    with pytest.raises(NoSliding):
        detect_onset(spec, ramp_profile(0.3))  # peak speed before the step


def test_onset_never_after_mask():
    rng = np.random.default_rng(8)
    for _ in range(20):
        mags = rng.uniform(0, 1, size=(300, 10))
        mags[rng.integers(0, 300):] *= 50
        prof = ramp_profile(rng.uniform(0.05, 0.6))
        t_vmax = prof[0][np.argmax(prof[1])]
        try:
            ev = detect_onset(BinnedSpectrogram(mags, 0.002, 100.0), prof)
        except NoSliding:
            continue
        assert ev.t_sliding - 0.001 <= t_vmax + 1e-12


def test_identical_sets_give_no_events():
    clips = [white(20000, seed=s, sigma=0.01) for s in range(3)]
    assert pair_trials(clips, clips, ramp_profile(0.2)) == []


@pytest.fixture(scope="module")
def fig3_scenario(robot):
    """Fastest grid profile with mu_s chosen so slip starts at t* = 0.294 s."""
    prof = scurve_plan(0.5, 2.5, 10.0)
    ramp = PiecewiseLinearAlpha.ramp(0.8, 0.3)
    _, v_star, a_star = sample_profile(prof, 0.294)
    mu = a_star / (9.81 * float(ramp(v_star)))
    truth = GroundTruthFriction(alpha_star=ramp)
    traj = line_to_joint_trajectory(robot, COLLECT_START, COLLECT_END, prof,
                                    yaw=float(np.arctan2(COLLECT_START[1], COLLECT_START[0])))
    sim = simulate_transport(robot, traj, [ObjectSpec(0.1, [0, 0, 0.03], mu)], truth)
    empty = simulate_transport(robot, traj, [], truth)
    return prof, traj, sim, empty


def test_detects_fig3_onset(fig3_scenario):
    prof, traj, sim, empty = fig3_scenario
    t_true = sim.slip_onset(0)
    assert t_true == pytest.approx(0.294, abs=2e-3)
    with_obj = [synth_audio(sim, traj, SynthParams(seed=s)) for s in range(5)]
    without = [synth_audio(empty, traj, SynthParams(seed=100 + s)) for s in range(5)]
    events = pair_trials(with_obj, without, cartesian_samples(prof), dedup=False)
    assert len(events) == 5
    for ev in events:
        assert abs(ev.t_sliding - t_true) <= 0.002
        assert ev.a_sliding_mag == pytest.approx(2.5, abs=1e-9)
    assert len(unique_events(events)) <= 2


def test_wav_round_trip(tmp_path, fig3_scenario):
    _, traj, sim, _ = fig3_scenario
    clip = synth_audio(sim, traj, SynthParams(seed=1))
    write_wav(tmp_path / "a.wav", clip)
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == SR and back.samples.size == clip.samples.size
    assert np.abs(back.samples - clip.samples).max() < 1.0 / 32767


def test_dedup_and_event_io(tmp_path):
    e = SlidingEvent(0.3, 0.42, 2.5)
    events = [e, SlidingEvent(0.302, 0.42, 2.5), SlidingEvent(0.31, 0.45, 2.5)]
    assert len(unique_events(events)) == 2
    write_events(tmp_path / "ev.jsonl", events)
    assert read_events(tmp_path / "ev.jsonl") == events
    with pytest.raises(ValueError):
        SlidingEvent(0.1, -1.0, 0.0)
