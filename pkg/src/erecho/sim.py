"""Seeded Monte Carlo photon-echo simulator.

Each ion is a two-level Bloch vector (u, v, w).  Optical pulses are ideal
instantaneous rotations about x applied at the pulse centre to ions inside
the pulse bandwidth.  Between pulses an ion only accumulates phase,

    phi = 2 pi * int (static + bath(t) + k E(t) cos(theta)) dt + B(t),

where the bath term is a sudden-jump process, E(t) comes from the Stark
gates and B(t) is a Brownian phase that realises the homogeneous T2.
Phase integrals are exact: the bath is piecewise constant between jumps
and the Stark field is piecewise constant between gate edges.

Ions are processed in fixed blocks of ``SimConfig.block_size`` and every
random draw is keyed by (seed, stream, ion index, event index), so results
are bit-identical for any number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    Detect,
    DipoleKernel,
    EnsembleSpec,
    OpticalPulse,
    PulseArea,
    PulseSequence,
    StarkGate,
    SweepCurve,
    ValidationError,
    ensure_valid,
    validate,
)
from .rng import CounterRNG

__all__ = [
    "SimConfig",
    "IonStates",
    "EchoTrace",
    "BudgetExceeded",
    "Ensemble",
    "simulate",
    "two_pulse_sequence",
    "three_pulse_sequence",
    "stark_sequence",
    "saturation_sequence",
    "two_pulse_decay",
    "three_pulse_sweep",
    "saturation_recovery",
    "stark_gated_echo",
    "apply_shf_modulation",
]


class BudgetExceeded(MemoryError):
    def __init__(self, required: int, allowed: int):
        self.required = required
        self.allowed = allowed
        super().__init__(
            f"bath trajectories need ~{required:,} stored values, "
            f"memory budget allows {allowed:,}")


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``pulse_bandwidth`` defaults to 1 / (shortest optical pulse).  Only
    ions inside that window are simulated unless ``sample_full_line`` is
    set, in which case ions are drawn from the whole line and the
    out-of-window ones are left untouched by the pulses.
    """

    n_ions: int = 10_000
    seed: int = 0
    time_step: float = 4e-9
    pulse_bandwidth: float | None = None
    detection_bin: float = 4e-9
    block_size: int = 2048
    workers: int = 1
    bath_components: int = 32
    memory_budget: int = 200_000_000
    amplitude_scale: float = 1.0
    laser_detuning: float = 0.0
    sample_full_line: bool = False


def validate_config(cfg: SimConfig, seq: PulseSequence | None = None) -> list[str]:
    report = []
    if not isinstance(cfg.n_ions, (int, np.integer)) or cfg.n_ions < 100:
        report.append(f"n_ions must be an integer >= 100 (got {cfg.n_ions!r})")
    if not 0 <= int(cfg.seed) < 2**64:
        report.append("seed must be a 64-bit unsigned integer")
    for name in ("time_step", "detection_bin"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and v > 0):
            report.append(f"{name} must be > 0")
    if cfg.pulse_bandwidth is not None and not cfg.pulse_bandwidth > 0:
        report.append("pulse_bandwidth must be > 0")
    if cfg.block_size < 1 or cfg.workers < 1 or cfg.bath_components < 1:
        report.append("block_size, workers and bath_components must be >= 1")
    if seq is not None:
        durations = [p.duration for p in seq.optical if p.duration > 0]
        if durations and cfg.time_step > min(durations) / 4:
            report.append(
                f"time_step {cfg.time_step:g} s exceeds a quarter of the shortest "
                f"pulse ({min(durations):g} s)")
    return report


@dataclass
class IonStates:
    """Struct-of-arrays state for one block of ions."""

    index: np.ndarray
    static_detuning: np.ndarray
    dipole_angle: np.ndarray
    amplitude_weight: np.ndarray
    in_band: np.ndarray
    coherence: np.ndarray  # u + i v
    population: np.ndarray  # w
    accumulated_phase: np.ndarray
    bath_detuning: np.ndarray

    @property
    def bloch(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.coherence.real, self.coherence.imag, self.population

    @property
    def norm2(self) -> np.ndarray:
        return np.abs(self.coherence) ** 2 + self.population ** 2


@dataclass(frozen=True)
class EchoTrace:
    """Detector-window output of :func:`simulate`.

    ``field`` is the summed complex coherence per bin and ``field_var`` holds
    the Monte Carlo (var Re, var Im, cov) of that sum.
    """

    times: np.ndarray
    intensity: np.ndarray
    markers: tuple = ()
    field: np.ndarray | None = None
    field_var: np.ndarray | None = None
    incoherent: np.ndarray | None = None
    bin_width: float = 0.0
    n_ions: int = 0
    participating_fraction: float = 1.0
    max_norm_drift: float = 0.0
    span: tuple = (0.0, 0.0)

    def marker(self, label: str) -> float | None:
        for name, t in self.markers:
            if name == label:
                return t
        return None

    @property
    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(self.intensity))])

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        return (self.times >= t_lo) & (self.times <= t_hi)

    def integrated(self, t_lo: float | None = None, t_hi: float | None = None,
                   coherent_only: bool = False) -> float:
        """Bin-summed intensity x bin width over [t_lo, t_hi]."""
        sel = self.window(-np.inf if t_lo is None else t_lo, np.inf if t_hi is None else t_hi)
        inten = self.intensity
        if coherent_only and self.incoherent is not None:
            inten = inten - self.incoherent
        return float(np.sum(inten[sel]) * self.bin_width)

    def nearest_bin(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def scaled(self, factor: float) -> "EchoTrace":
        amp = math.sqrt(max(factor, 0.0))
        return replace(
            self,
            intensity=self.intensity * factor,
            field=None if self.field is None else self.field * amp,
            field_var=None if self.field_var is None else self.field_var * factor,
            incoherent=None if self.incoherent is None else self.incoherent * factor,
        )


# --------------------------------------------------------------------------
# sequence builders


def _detect_around(t_center: float, half_bins: int, bin_width: float) -> Detect:
    return Detect(t_center - (half_bins + 0.5) * bin_width, (2 * half_bins + 1) * bin_width)


def two_pulse_sequence(tau: float, pulse_duration: float = 32e-9, first_center: float | None = None,
                       detect_half_bins: int = 16, bin_width: float = 4e-9,
                       detect: Detect | None = None) -> PulseSequence:
    """pi/2 - tau - pi with a detection window centred on the echo at 2 tau."""
    c1 = pulse_duration / 2 if first_center is None else first_center
    p1 = OpticalPulse(c1 - pulse_duration / 2, pulse_duration, PulseArea.HALF_PI)
    p2 = OpticalPulse(c1 + tau - pulse_duration / 2, pulse_duration, PulseArea.PI)
    det = detect or _detect_around(c1 + 2 * tau, detect_half_bins, bin_width)
    return PulseSequence(sorted([p1, p2, det], key=lambda e: e.start))


def three_pulse_sequence(tau: float, t_wait: float, pulse_duration: float = 32e-9,
                         detect_half_bins: int = 16, bin_width: float = 4e-9) -> PulseSequence:
    """pi/2 - tau - pi/2 - T_W - pi/2 - tau - stimulated echo."""
    c1 = pulse_duration / 2
    c2 = c1 + tau
    c3 = c2 + t_wait
    pulses = [OpticalPulse(c - pulse_duration / 2, pulse_duration, PulseArea.HALF_PI)
              for c in (c1, c2, c3)]
    det = _detect_around(c3 + tau, detect_half_bins, bin_width)
    return PulseSequence(pulses + [det])


def stark_sequence(tau: float, gate_length: float, field: float, pulse_duration: float = 32e-9,
                   gate_start: float | None = None, detect_half_bins: int = 4,
                   bin_width: float = 4e-9) -> PulseSequence:
    """Two-pulse echo with a Stark gate between the pi/2 and pi pulses."""
    c1 = pulse_duration / 2
    p1 = OpticalPulse(0.0, pulse_duration, PulseArea.HALF_PI)
    p2 = OpticalPulse(c1 + tau - pulse_duration / 2, pulse_duration, PulseArea.PI)
    events = [p1, p2, _detect_around(c1 + 2 * tau, detect_half_bins, bin_width)]
    if gate_length > 0:
        start = p1.end + 0.5 * (p2.start - p1.end - gate_length) if gate_start is None else gate_start
        events.append(StarkGate(start, gate_length, field))
    return PulseSequence(sorted(events, key=lambda e: e.start))


def saturation_sequence(t_wait: float, tau: float = 1e-6, saturation: float = 1e-3,
                        pulse_duration: float = 32e-9, power_scale: float = 1.0,
                        detect_half_bins: int = 8, bin_width: float = 4e-9) -> PulseSequence:
    """Saturation pulse, wait, then a two-pulse echo probe."""
    sat = OpticalPulse(0.0, saturation, PulseArea.SATURATION, power_scale)
    c1 = saturation + t_wait
    probe = two_pulse_sequence(tau, pulse_duration, first_center=c1,
                               detect_half_bins=detect_half_bins, bin_width=bin_width)
    return PulseSequence([sat] + list(probe.events))


def _markers(seq: PulseSequence) -> tuple:
    opt = [p for p in seq.optical if p.area is not PulseArea.SATURATION]
    out = []
    if len(opt) >= 2:
        c1, c2 = opt[0].center, opt[1].center
        tau = c2 - c1
        if len(opt) >= 3 and opt[1].area is PulseArea.HALF_PI:
            out.append(("stimulated_echo", opt[2].center + tau))
        else:
            out.append(("primary_echo", c1 + 2 * tau))
            out.append(("secondary_echo", c1 + 3 * tau))
    return tuple(out)


def _bin_centers(seq: PulseSequence, bin_width: float) -> tuple[np.ndarray, float]:
    centers, widths = [], []
    for d in seq.detects:
        n = max(1, int(round(d.duration / bin_width)))
        w = d.duration / n if d.duration > 0 else bin_width
        centers.append(d.start + (np.arange(n) + 0.5) * w)
        widths.append(w)
    if not centers:
        return np.empty(0), bin_width
    return np.concatenate(centers), float(np.mean(widths))


# --------------------------------------------------------------------------
# the ensemble


@dataclass
class _Block:
    index: np.ndarray
    static: np.ndarray
    in_band: np.ndarray
    projection: np.ndarray  # cos(theta), signed
    theta: np.ndarray
    bath_times: np.ndarray | None = None  # (n, m) event times, padded with +big
    bath_values: np.ndarray | None = None  # detuning after each event
    bath_cum: np.ndarray | None = None  # integral up to each event
    bath_flat: np.ndarray | None = None
    bath_stride: float = 0.0


class Ensemble:
    """Sampled ions plus their bath trajectories, reusable across sequences.

    Sharing one ``Ensemble`` between the points of a sweep gives common
    random numbers: every sequence sees the same ions.
    """

    def __init__(self, spec: EnsembleSpec, cfg: SimConfig, horizon: float,
                 bandwidth: float | None = None):
        ensure_valid(spec, "EnsembleSpec")
        report = validate_config(cfg)
        if report:
            raise ValidationError(report, "SimConfig")
        self.spec = spec
        self.cfg = cfg
        self.horizon = float(horizon)
        self.bandwidth = float(bandwidth or cfg.pulse_bandwidth or 1.0 / 32e-9)
        lo = cfg.laser_detuning - self.bandwidth / 2
        hi = cfg.laser_detuning + self.bandwidth / 2
        self.window = (lo, hi)
        self.participating_fraction = spec.line.mass(lo, hi)
        self.weight = cfg.amplitude_scale / cfg.n_ions
        self.kernel = DipoleKernel(spec.dipole_kernel)

        bath = spec.bath
        self.has_bath = bool(bath and bath.flip_rate > 0 and bath.max_shift > 0)
        if self.has_bath:
            K = cfg.bath_components
            lam = K * bath.flip_rate * self.horizon
            m_max = int(lam + 8.0 * math.sqrt(lam) + 16)
            required = 3 * cfg.n_ions * m_max
            if required > cfg.memory_budget:
                raise BudgetExceeded(required, cfg.memory_budget)

        self._root = CounterRNG(cfg.seed, "erecho")
        starts = range(0, cfg.n_ions, cfg.block_size)
        self.blocks = self._map(self._make_block,
                                [(s, min(s + cfg.block_size, cfg.n_ions)) for s in starts])

    def _map(self, fn, items):
        if self.cfg.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(it) for it in items]

    def _make_block(self, bounds) -> _Block:
        i0, i1 = bounds
        idx = np.arange(i0, i1, dtype=np.uint64)
        spec, cfg = self.spec, self.cfg
        u = self._root.spawn("static").uniform(idx)
        if cfg.sample_full_line:
            static = spec.line.sample(u) - cfg.laser_detuning
            in_band = np.abs(static) <= self.bandwidth / 2
        else:
            static = spec.line.sample(u, *self.window) - cfg.laser_detuning
            in_band = np.ones(idx.size, dtype=bool)
        dip = self._root.spawn("dipole")
        theta = self.kernel.sample(dip.uniform(idx, 0))
        sign = dip.sign(idx, 1)
        theta = np.where(sign > 0, theta, math.pi - theta)
        blk = _Block(idx, static, in_band, np.cos(theta), theta)
        if self.has_bath:
            self._make_bath(blk)
        return blk

    def _make_bath(self, blk: _Block):
        bath, K = self.spec.bath, self.cfg.bath_components
        n = blk.index.size
        # K independent components, each redrawn at rate R from a Lorentzian
        # of FWHM gamma_SD / (2K): the summed detuning is stationary and its
        # change over T_W is Lorentzian of FWHM gamma_SD (1 - exp(-R T_W))
        hw = bath.max_shift / (4.0 * K)
        rate = K * bath.flip_rate
        rng = self._root.spawn("bath")
        comps = rng.cauchy(blk.index, 0, K) * hw
        value = comps.sum(axis=1)
        times = [np.zeros(n)]
        values = [value.copy()]
        cum = [np.zeros(n)]
        t = np.zeros(n)
        integral = np.zeros(n)
        rows = np.arange(n)
        j = 0
        while True:
            j += 1
            draws = rng.uniform(blk.index, j, 3)
            t_next = t - np.log(draws[:, 0]) / rate
            active = t < self.horizon
            if not np.any(active):
                break
            integral = np.where(active, integral + value * (t_next - t), integral)
            which = np.minimum((draws[:, 1] * K).astype(np.int64), K - 1)
            new = np.tan(math.pi * (draws[:, 2] - 0.5)) * hw
            old = comps[rows, which]
            value = np.where(active, value + new - old, value)
            comps[rows, which] = np.where(active, new, old)
            t = np.where(active, t_next, t)
            times.append(np.where(active, t_next, np.inf))
            values.append(value.copy())
            cum.append(integral.copy())
        bt = np.stack(times, axis=1)
        stride = 2.0 * self.horizon + 1.0
        big = np.where(np.isfinite(bt), bt, stride * 0.75 + self.horizon)
        blk.bath_times = bt
        blk.bath_values = np.stack(values, axis=1)
        blk.bath_cum = np.stack(cum, axis=1)
        blk.bath_stride = stride
        blk.bath_flat = (big + stride * np.arange(n)[:, None]).ravel()

    def bath_integral(self, blk: _Block, t: float) -> np.ndarray:
        """int_0^t bath detuning dt for every ion of a block."""
        if not self.has_bath:
            return np.zeros(blk.index.size)
        if t > self.horizon * (1 + 1e-12):
            raise ValueError(f"time {t:g} s beyond bath horizon {self.horizon:g} s")
        n, m = blk.bath_times.shape
        rows = np.arange(n)
        pos = np.searchsorted(blk.bath_flat, t + blk.bath_stride * rows, side="right")
        k = pos - rows * m - 1
        return blk.bath_cum[rows, k] + blk.bath_values[rows, k] * (t - blk.bath_times[rows, k])

    def bath_detuning(self, blk: _Block, t: float) -> np.ndarray:
        if not self.has_bath:
            return np.zeros(blk.index.size)
        n, m = blk.bath_times.shape
        rows = np.arange(n)
        pos = np.searchsorted(blk.bath_flat, t + blk.bath_stride * rows, side="right")
        return blk.bath_values[rows, pos - rows * m - 1]

    def ion_states(self, block: int = 0) -> IonStates:
        blk = self.blocks[block]
        n = blk.index.size
        return IonStates(
            index=blk.index, static_detuning=blk.static, dipole_angle=blk.theta,
            amplitude_weight=np.full(n, self.weight), in_band=blk.in_band,
            coherence=np.zeros(n, complex), population=-np.ones(n),
            accumulated_phase=np.zeros(n), bath_detuning=self.bath_detuning(blk, 0.0))

    # ----------------------------------------------------------------------

    def run(self, seq: PulseSequence) -> EchoTrace:
        report = validate(seq) + validate_config(self.cfg, seq)
        if report:
            raise ValidationError(report, "PulseSequence")
        if not seq.detects:
            raise ValidationError(["sequence has no Detect window"], "PulseSequence")
        bins, bin_width = _bin_centers(seq, self.cfg.detection_bin)
        timeline = [(p.center, 0, i) for i, p in enumerate(seq.optical)]
        timeline += [(t, 1, i) for i, t in enumerate(bins)]
        timeline.sort(key=lambda x: (x[0], x[1]))
        t_last = timeline[-1][0] if timeline else 0.0
        if self.has_bath and t_last > self.horizon * (1 + 1e-12):
            raise ValueError(f"sequence ends at {t_last:g} s, beyond ensemble horizon {self.horizon:g} s")

        parts = self._map(lambda b: self._run_block(b, seq, timeline, bins.size), self.blocks)
        s1 = np.zeros(bins.size, complex)
        m_rr = np.zeros(bins.size)
        m_ii = np.zeros(bins.size)
        m_ri = np.zeros(bins.size)
        drift = 0.0
        for p in parts:  # fixed index order
            s1 += p[0]
            m_rr += p[1]
            m_ii += p[2]
            m_ri += p[3]
            drift = max(drift, p[4])
        n = self.cfg.n_ions
        var = np.stack([m_rr - s1.real ** 2 / n, m_ii - s1.imag ** 2 / n,
                        m_ri - s1.real * s1.imag / n], axis=1)
        span_end = max(seq.end, t_last)
        markers = tuple((lab, t) for lab, t in _markers(seq) if 0.0 <= t <= span_end)
        return EchoTrace(
            times=bins, intensity=np.abs(s1) ** 2, markers=markers, field=s1,
            field_var=np.maximum(var, [0.0, 0.0, -np.inf]), incoherent=m_rr + m_ii,
            bin_width=bin_width, n_ions=n, participating_fraction=self.participating_fraction,
            max_norm_drift=drift, span=(0.0, span_end))

    def _run_block(self, blk: _Block, seq: PulseSequence, timeline, n_bins):
        spec = self.spec
        n = blk.index.size
        coh = np.zeros(n, complex)
        pop = -np.ones(n)
        out = np.zeros(n_bins, complex)
        m_rr = np.zeros(n_bins)
        m_ii = np.zeros(n_bins)
        m_ri = np.zeros(n_bins)
        drift = 0.0
        wgt = self.weight
        t2 = spec.t2_optical
        diffusion = 0.0 if not math.isfinite(t2) else 2.0 / t2  # phase variance per second
        noise = self._root.spawn("phase_noise")
        k_stark = spec.stark_k
        optical = seq.optical
        t_prev = 0.0
        bath_prev = self.bath_integral(blk, 0.0)
        kicks = noise.normal(blk.index, 0, len(timeline)) if diffusion and timeline else None
        for step, (t, kind, i) in enumerate(timeline):
            dt = t - t_prev
            before = np.abs(coh) ** 2 + pop ** 2
            if dt > 0:
                bath_now = self.bath_integral(blk, t)
                cycles = blk.static * dt + (bath_now - bath_prev)
                area = seq.stark_integral(t_prev, t)
                if area:
                    cycles = cycles + k_stark * area * blk.projection
                phase = 2.0 * math.pi * cycles
                if diffusion:
                    phase = phase + math.sqrt(diffusion * dt) * kicks[:, step]
                coh = coh * np.exp(1j * phase)
                bath_prev = bath_now
                t_prev = t
            if kind == 0 and optical[i].area is PulseArea.SATURATION:
                # incoherent shelving shrinks the Bloch vector by design, so
                # only the free evolution before it enters the drift check
                drift = max(drift, float(np.max(np.abs(np.abs(coh) ** 2 + pop ** 2 - before))))
                keep = 1.0 - min(max(optical[i].power_scale, 0.0), 1.0)
                coh = np.where(blk.in_band, coh * keep, coh)
                pop = np.where(blk.in_band, pop * keep, pop)
                continue
            if kind == 0:
                a = optical[i].rotation_angle
                ca, sa = math.cos(a), math.sin(a)
                v = coh.imag
                v_new = v * ca - pop * sa
                w_new = v * sa + pop * ca
                coh = np.where(blk.in_band, coh.real + 1j * v_new, coh)
                pop = np.where(blk.in_band, w_new, pop)
            else:
                x = wgt * coh
                out[i] = x.sum()
                m_rr[i] = np.dot(x.real, x.real)
                m_ii[i] = np.dot(x.imag, x.imag)
                m_ri[i] = np.dot(x.real, x.imag)
            after = np.abs(coh) ** 2 + pop ** 2
            drift = max(drift, float(np.max(np.abs(after - before))))
        return out, m_rr, m_ii, m_ri, drift


def _horizon(seqs) -> float:
    h = 0.0
    for s in seqs:
        h = max(h, s.end, *[p.center for p in s.optical] or [0.0])
    return h


def _bandwidth(cfg: SimConfig, seqs) -> float:
    if cfg.pulse_bandwidth:
        return cfg.pulse_bandwidth
    durations = [p.duration for s in seqs for p in s.optical
                 if p.area is not PulseArea.SATURATION and p.duration > 0]
    return 1.0 / min(durations) if durations else 1.0 / 32e-9


def simulate(spec: EnsembleSpec, seq: PulseSequence, cfg: SimConfig) -> EchoTrace:
    """Run one pulse sequence over a freshly sampled ensemble."""
    ensure_valid(seq, "PulseSequence")
    ens = Ensemble(spec, cfg, _horizon([seq]), _bandwidth(cfg, [seq]))
    return ens.run(seq)


# --------------------------------------------------------------------------
# sweeps


def two_pulse_decay(spec: EnsembleSpec, cfg: SimConfig, tau_grid, pulse_duration: float = 32e-9,
                    detect_half_bins: int = 8) -> SweepCurve:
    """Integrated two-pulse echo intensity versus tau."""
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid must be strictly ascending")
    half = (detect_half_bins + 0.5) * cfg.detection_bin
    if taus[0] <= pulse_duration + half:
        raise ValueError(
            f"smallest tau must exceed pulse duration plus detection half-window ({pulse_duration + half:g} s)")
    seqs = [two_pulse_sequence(t, pulse_duration, detect_half_bins=detect_half_bins,
                               bin_width=cfg.detection_bin) for t in taus]
    ens = Ensemble(spec, cfg, _horizon(seqs), _bandwidth(cfg, seqs))
    y = np.array([ens.run(s).integrated() for s in seqs])
    curve = SweepCurve(taus, y, x_unit="s", y_unit="a.u.", label="two-pulse echo decay",
                       x_name="tau", y_name="echo_area",
                       meta={"kind": "two_pulse", "n_ions": cfg.n_ions, "seed": cfg.seed})
    if spec.shf_modulation is not None:
        curve = apply_shf_modulation(curve, spec.shf_modulation.depth, spec.shf_modulation.frequency)
    return curve


def three_pulse_sweep(spec: EnsembleSpec, cfg: SimConfig, tau_grid, t_wait_list,
                      pulse_duration: float = 32e-9, detect_half_bins: int = 8):
    """Stimulated-echo decay versus tau for each waiting time.

    Returns a list of ``(t_wait, curve, gamma_eff)`` where ``gamma_eff`` is
    1/(pi T2_eff) from an exponential fit of the decay.
    """
    from .fitting import fit_echo_decay
    from .analytic import homogeneous_linewidth

    taus = np.asarray(tau_grid, dtype=float)
    waits = np.asarray(t_wait_list, dtype=float)
    if np.any(waits < taus.min()):
        raise ValueError("every t_wait must be >= the smallest tau")
    half = (detect_half_bins + 0.5) * cfg.detection_bin
    if taus.min() <= pulse_duration + half:
        raise ValueError("smallest tau too short for the detection window")
    grid = {(tw, ta): three_pulse_sequence(ta, tw, pulse_duration, detect_half_bins,
                                          cfg.detection_bin)
            for tw in waits for ta in taus}
    ens = Ensemble(spec, cfg, _horizon(grid.values()), _bandwidth(cfg, grid.values()))
    out = []
    for tw in waits:
        y = np.array([ens.run(grid[(tw, ta)]).integrated() for ta in taus])
        curve = SweepCurve(taus, y, x_unit="s", y_unit="a.u.",
                           label=f"stimulated echo, T_W={tw:g} s", x_name="tau",
                           y_name="echo_area", meta={"kind": "three_pulse", "t_wait": float(tw)})
        res = fit_echo_decay(curve)
        out.append((float(tw), curve, homogeneous_linewidth(res.params["T2"])))
    return out


def _rate_matrix(pump: float, g_opt: float, branching: float, t_spin: float, g1_eq: float):
    # state (g1, g2, e); columns are source populations
    k12 = (1.0 - g1_eq) / t_spin
    k21 = g1_eq / t_spin
    return np.array([
        [-pump - k12, k21, pump + (1 - branching) * g_opt],
        [k12, -k21, branching * g_opt],
        [pump, 0.0, -pump - g_opt],
    ])


def saturation_recovery(spec: EnsembleSpec, cfg: SimConfig | None, t_wait_grid, *,
                        saturation_duration: float = 1e-3, power_scale: float = 1.0,
                        pump_rate: float = 1e5, branching: float = 0.5,
                        g1_equilibrium: float = 0.5) -> SweepCurve:
    """Probe amplitude after shelving, from a three-level rate model.

    Levels are the addressable ground sublevel g1, the shelving sublevel g2
    and the excited state e.  A fraction ``short_fraction`` of ions relaxes
    g2 -> g1 with ``spin_t1_short``, the rest with ``spin_t1_long``.  The
    echo probe is proportional to the g1 population, normalised to its
    equilibrium value.
    """
    from scipy.linalg import expm

    ensure_valid(spec, "EnsembleSpec")
    waits = np.asarray(t_wait_grid, dtype=float)
    if np.any(np.diff(waits) < 0):
        raise ValueError("t_wait_grid must be ascending")
    pump = pump_rate * max(power_scale, 0.0)
    x_eq = np.array([g1_equilibrium, 1.0 - g1_equilibrium, 0.0])
    g_opt = 1.0 / spec.t1_optical
    total = np.zeros_like(waits)
    for frac, t_spin in ((spec.short_fraction, spec.spin_t1_short),
                         (1.0 - spec.short_fraction, spec.spin_t1_long)):
        if frac == 0:
            continue
        a_pump = _rate_matrix(pump, g_opt, branching, t_spin, g1_equilibrium)
        a_free = _rate_matrix(0.0, g_opt, branching, t_spin, g1_equilibrium)
        x0 = expm(a_pump * saturation_duration) @ x_eq
        g1 = np.array([(expm(a_free * tw) @ x0)[0] for tw in waits])
        total += frac * g1
    y = total / g1_equilibrium
    return SweepCurve(waits, y, x_unit="s", y_unit="1", label="saturation recovery",
                      x_name="t_wait", y_name="echo_amplitude",
                      meta={"kind": "saturation_recovery", "x_scale": "log"})


def stark_gated_echo(spec: EnsembleSpec, cfg: SimConfig, pulse_lengths, field: float, *,
                     tau: float | None = None, pulse_duration: float = 32e-9) -> SweepCurve:
    """Normalised echo amplitude versus Stark gate length at fixed field.

    The amplitude is the echo field at the echo peak projected on the
    gate-free echo of the same ions, so it is signed and equals 1 for a
    zero-length gate.  ``sigma`` holds the Monte Carlo standard error.
    """
    lengths = np.asarray(pulse_lengths, dtype=float)
    if np.any(lengths < 0):
        raise ValueError("pulse lengths must be >= 0")
    if tau is None:
        tau = float(lengths.max()) + 2 * pulse_duration + 0.1e-6
    seqs = [stark_sequence(tau, L, field, pulse_duration, bin_width=cfg.detection_bin)
            for L in lengths]
    for s in seqs:
        report = validate(s)
        if report:
            raise ValidationError(report, "PulseSequence")
    ref_seq = stark_sequence(tau, 0.0, field, pulse_duration, bin_width=cfg.detection_bin)
    ens = Ensemble(spec, cfg, _horizon(seqs + [ref_seq]), _bandwidth(cfg, seqs))
    ref = ens.run(ref_seq)
    t_echo = ref.marker("primary_echo")
    j = ref.nearest_bin(t_echo)
    s_ref = ref.field[j]
    e = s_ref / abs(s_ref)
    amps, sig = [], []
    for s in seqs:
        tr = ens.run(s)
        f = tr.field[j]
        amps.append((f * np.conj(e)).real / abs(s_ref))
        vr, vi, cri = tr.field_var[j]
        var = e.real ** 2 * vr + e.imag ** 2 * vi + 2 * e.real * e.imag * cri
        sig.append(math.sqrt(max(var, 0.0)) / abs(s_ref))
    sig = np.maximum(np.array(sig), 1e-300)
    return SweepCurve(lengths, np.array(amps), sigma=sig, x_unit="s", y_unit="1",
                      label="Stark-gated echo", x_name="t_pulse", y_name="echo_amplitude",
                      meta={"kind": "stark", "field": float(field), "tau": float(tau),
                            "kernel": DipoleKernel(spec.dipole_kernel).value})


def apply_shf_modulation(obj, m: float, f: float):
    """Multiply echo-vs-tau data by 1 - m sin^2(pi f tau).

    Curves use their abscissa as tau; a trace is scaled as a whole using
    the tau implied by its primary-echo marker.
    """
    if not 0 <= m <= 1:
        raise ValueError("modulation depth must lie in [0, 1]")
    if isinstance(obj, SweepCurve):
        factor = 1.0 - m * np.sin(math.pi * f * obj.abscissa) ** 2
        sig = None if obj.sigma is None else obj.sigma * factor
        if sig is not None:
            sig = np.where(sig > 0, sig, obj.sigma)
        return obj.replace(ordinate=obj.ordinate * factor, sigma=sig)
    if isinstance(obj, EchoTrace):
        t_echo = obj.marker("primary_echo")
        if t_echo is None:
            return obj
        t_sec = obj.marker("secondary_echo")
        tau = (t_sec - t_echo) if t_sec is not None else t_echo / 2
        return obj.scaled(1.0 - m * math.sin(math.pi * f * tau) ** 2)
    raise TypeError(f"cannot modulate {type(obj).__name__}")
