"""Functional and cycle-count model of the accelerator tile.

A tile is a column of 16 processing elements, each with an 8-entry register
file indexed by the weight's centroid id, fed by a rotating pair of
16-activation buffers.  Work is blocked by 16-row strips and activation
column groups: phase 1 consumes one 16-weight diagonal block per cycle and
accumulates activations into the per-index register files; phase 2 hands the
register files to the shared processing unit (SPU), which sweeps the
centroid table at 16 cycles per centroid while the PEs idle.  Outliers take
the SPU bypass path: the first outlier on an activation rides along free,
each additional outlier on the same activation stalls the PEs one cycle.

4-bit layers run on paired tiles: each tile of the pair owns half of the 16
centroids, sweeps its half in parallel with its partner, and a 16-cycle
pairing pass adds the two partial outputs.  5b and 6b layers exceed the
register file and are not servable.

Cycle accounting is event counting at the block/phase level; counts depend
only on shape, bit width, plan, and outlier positions, never on values.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .container import SM_DIM, decode, read_header
from .errors import BitsMismatch, ScheduleIncomplete
from .kernel import _check_acts

_ROT = (np.arange(SM_DIM)[:, None] - np.arange(SM_DIM)[None, :]) % SM_DIM  # [i, b] -> col
_ROW_GRID = np.broadcast_to(np.arange(SM_DIM)[:, None], (SM_DIM, SM_DIM))


@dataclass(frozen=True)
class TileConfig:
    pes_per_tile: int = 16
    rf_entries: int = 8
    spu_rf_entries: int = 16
    tiles: int = 1
    paired_for_4bit: bool = False

    def __post_init__(self):
        if self.pes_per_tile != 16 or self.rf_entries != 8 or self.spu_rf_entries != 16:
            raise ScheduleIncomplete("tile shape is fixed: 16 PEs, 8 RF entries, 16 SPU entries")
        if self.tiles < 1:
            raise ScheduleIncomplete("need at least one tile")
        if self.paired_for_4bit and self.tiles % 2:
            raise ScheduleIncomplete("paired mode requires an even tile count")

    @property
    def units(self) -> int:
        """Independent compute units: tile pairs when paired, else tiles."""
        return self.tiles // 2 if self.paired_for_4bit else self.tiles

    @property
    def pes_per_unit(self) -> int:
        return self.pes_per_tile * (2 if self.paired_for_4bit else 1)


DEFAULT_CONFIG = TileConfig()


def check_servable(bits: int, cfg: TileConfig) -> None:
    if bits in (2, 3):
        if cfg.paired_for_4bit:
            raise BitsMismatch(f"{bits}b layers run on single tiles, not pairs")
    elif bits == 4:
        if not cfg.paired_for_4bit:
            raise BitsMismatch("4b layers need paired tiles (16 centroids, 8-entry RFs)")
    else:
        raise BitsMismatch(f"{bits}b exceeds the register file even with pairing")


@dataclass(frozen=True)
class DataflowPlan:
    """Deterministic blocking of one layer onto tile strips and column
    groups, with the outlier-free cycle expectation for a single unit."""

    rows: int
    cols: int
    bits: int
    words: int
    padded_rows: int
    padded_cols: int
    group_cols: int
    n_strips: int
    n_groups: int
    paired: bool
    phase1_cycles: int
    phase2_per_sweep: int
    pairing_per_sweep: int
    sweeps: int
    total_cycles: int

    @property
    def phase2_cycles(self) -> int:
        return self.phase2_per_sweep * self.sweeps

    @property
    def pairing_cycles(self) -> int:
        return self.pairing_per_sweep * self.sweeps


@dataclass
class ScheduledLayer:
    container: bytes
    plan: DataflowPlan


@dataclass
class TileTrace:
    phase1_cycles: int
    outlier_stall_cycles: int
    phase2_cycles: int
    pairing_cycles: int
    total_cycles: int
    busy_pe_cycles: int
    idle_pe_cycles: int
    utilization: float
    outputs: np.ndarray
    indexes_fetched: int
    indexes_consumed: int
    outlier_records_read: int

    def summary(self) -> dict:
        return {
            "phase1_cycles": self.phase1_cycles,
            "stalls": self.outlier_stall_cycles,
            "phase2_cycles": self.phase2_cycles,
            "pairing_cycles": self.pairing_cycles,
            "total_cycles": self.total_cycles,
            "utilization": self.utilization,
        }


@dataclass
class ChipTrace:
    total_cycles: int
    busy_pe_cycles: int
    idle_pe_cycles: int
    utilization: float
    layer_traces: list = field(default_factory=list)

    @property
    def outputs(self) -> list:
        return [t.outputs for t in self.layer_traces]


def plan_dataflow(rows: int, cols: int, bits: int, words: int = 1,
                  cfg: TileConfig = DEFAULT_CONFIG, group_cols: int = SM_DIM) -> DataflowPlan:
    """Block a layer into 16-row strips and activation column groups.

    group_cols defaults to one activation buffer (16); larger multiples of
    16 trade fewer phase-2 sweeps for more staging-buffer refills.  The plan
    records expected cycles for one unit with no outliers.
    """
    check_servable(bits, cfg)
    if words < 1:
        raise ScheduleIncomplete("need at least one activation word")
    if group_cols < SM_DIM or group_cols % SM_DIM:
        raise ScheduleIncomplete("group_cols must be a positive multiple of 16")
    pr = (rows + SM_DIM - 1) // SM_DIM * SM_DIM
    pc = (cols + SM_DIM - 1) // SM_DIM * SM_DIM
    n_strips = pr // SM_DIM
    n_groups = (pc + group_cols - 1) // group_cols
    paired = cfg.paired_for_4bit
    k = 1 << bits
    phase2_per_sweep = (k // 2 if paired else k) * SM_DIM
    pairing_per_sweep = SM_DIM if paired else 0
    sweeps = n_strips * n_groups * words
    phase1 = n_strips * pc * words
    total = phase1 + sweeps * (phase2_per_sweep + pairing_per_sweep)
    return DataflowPlan(
        rows=rows, cols=cols, bits=bits, words=words, padded_rows=pr,
        padded_cols=pc, group_cols=group_cols, n_strips=n_strips,
        n_groups=n_groups, paired=paired, phase1_cycles=phase1,
        phase2_per_sweep=phase2_per_sweep, pairing_per_sweep=pairing_per_sweep,
        sweeps=sweeps, total_cycles=total,
    )


def schedule_layer(container: bytes, words: int = 1, cfg: TileConfig = DEFAULT_CONFIG,
                   group_cols: int = SM_DIM) -> ScheduledLayer:
    hdr = read_header(container)
    plan = plan_dataflow(hdr.rows, hdr.cols, hdr.bits, words, cfg, group_cols)
    return ScheduledLayer(container=container, plan=plan)


class _LayerState:
    """Decoded, padded views of one scheduled layer plus per-region outlier
    bookkeeping shared by the tile and chip engines."""

    def __init__(self, sched: ScheduledLayer, acts, cfg: TileConfig):
        plan = sched.plan
        hdr = read_header(sched.container)
        if (hdr.rows, hdr.cols, hdr.bits) != (plan.rows, plan.cols, plan.bits):
            raise ScheduleIncomplete("plan does not describe this container")
        if plan.n_strips != hdr.padded_rows // SM_DIM:
            raise ScheduleIncomplete("plan strip count does not cover the padded rows")
        check_servable(plan.bits, cfg)
        if plan.paired != cfg.paired_for_4bit:
            raise ScheduleIncomplete("plan pairing disagrees with the tile config")
        layer = decode(sched.container)
        self.layer = layer
        self.plan = plan
        a = _check_acts(acts, layer.cols)
        squeeze = a.ndim == 1
        a = a.reshape(layer.cols, -1).astype(np.float32)
        if a.shape[1] != plan.words:
            raise ScheduleIncomplete(f"plan expects {plan.words} words, got {a.shape[1]}")
        self.squeeze = squeeze
        pr, pc = plan.padded_rows, plan.padded_cols
        self.acts = np.zeros((pc, plan.words), dtype=np.float32)
        self.acts[: layer.cols] = a
        self.indexes = np.zeros((pr, pc), dtype=np.uint8)
        self.indexes[: layer.rows, : layer.cols] = layer.indexes
        self.g_mask = np.ones((pr, pc), dtype=bool)
        self.o_values = np.zeros((pr, pc), dtype=np.float32)
        ol = layer.outliers
        if len(ol):
            self.g_mask[ol.rows, ol.cols] = False
            self.o_values[ol.rows, ol.cols] = ol.values
        self.table = layer.centroid_table
        self.k = 1 << plan.bits
        # stalls per (strip, group): same-activation outliers beyond the first
        self.stalls = np.zeros((plan.n_strips, plan.n_groups), dtype=np.int64)
        self.region_outliers = np.zeros((plan.n_strips, plan.n_groups), dtype=np.int64)
        if len(ol):
            strip = (ol.rows // SM_DIM).astype(np.int64)
            group = (ol.cols // plan.group_cols).astype(np.int64)
            np.add.at(self.region_outliers, (strip, group), 1)
            # extras per (strip, column) beyond the first cost one stall each
            key = strip * pc + ol.cols
            uniq, cnt = np.unique(key, return_counts=True)
            np.add.at(self.stalls, (uniq // pc, (uniq % pc) // plan.group_cols), cnt - 1)
        self.out = np.zeros((pr, plan.words), dtype=np.float32)

    def run_region(self, s: int, g: int, w: int) -> None:
        """Functional phase 1 + phase 2 + SPU bypass for one (strip, group,
        word); float32 state throughout, container block order."""
        plan = self.plan
        r0 = s * SM_DIM
        c0 = g * plan.group_cols
        c1 = min(plan.padded_cols, c0 + plan.group_cols)
        rf = np.zeros((SM_DIM, self.k), dtype=np.float32)
        for sm_c in range(c0, c1, SM_DIM):
            blk_idx = self.indexes[r0: r0 + SM_DIM, sm_c: sm_c + SM_DIM]
            blk_msk = self.g_mask[r0: r0 + SM_DIM, sm_c: sm_c + SM_DIM]
            blk_act = self.acts[sm_c: sm_c + SM_DIM, w]
            np.add.at(
                rf,
                (_ROW_GRID, blk_idx[_ROW_GRID, _ROT]),
                np.where(blk_msk[_ROW_GRID, _ROT], blk_act[_ROT], np.float32(0.0)),
            )
        if plan.paired:
            half = self.k // 2
            part_a = np.zeros(SM_DIM, dtype=np.float32)
            part_b = np.zeros(SM_DIM, dtype=np.float32)
            for j in range(half):
                part_a += rf[:, j] * self.table[j]
            for j in range(half, self.k):
                part_b += rf[:, j] * self.table[j]
            sweep = part_a + part_b  # the pairing pass
        else:
            sweep = np.zeros(SM_DIM, dtype=np.float32)
            for j in range(self.k):
                sweep += rf[:, j] * self.table[j]
        # SPU bypass: exact outlier weights, multiplied as they stream past
        region_v = self.o_values[r0: r0 + SM_DIM, c0:c1]
        region_m = ~self.g_mask[r0: r0 + SM_DIM, c0:c1]
        if region_m.any():
            sweep = sweep + (region_v * self.acts[c0:c1, w][None, :] * region_m).sum(
                axis=1, dtype=np.float32)
        self.out[r0: r0 + SM_DIM, w] += sweep

    def outputs(self) -> np.ndarray:
        out = self.out[: self.layer.rows]
        return out[:, 0] if self.squeeze else out


def _finish_trace(state: _LayerState, phase1, stalls, phase2, pairing, busy, capacity_pes,
                  total=None):
    total = (phase1 + stalls + phase2 + pairing) if total is None else total
    plan = state.plan
    n_padded = plan.padded_rows * plan.padded_cols
    return TileTrace(
        phase1_cycles=int(phase1),
        outlier_stall_cycles=int(stalls),
        phase2_cycles=int(phase2),
        pairing_cycles=int(pairing),
        total_cycles=int(total),
        busy_pe_cycles=int(busy),
        idle_pe_cycles=int(total * capacity_pes - busy),
        utilization=busy / (total * capacity_pes) if total else 0.0,
        outputs=state.outputs(),
        indexes_fetched=n_padded,
        indexes_consumed=n_padded * plan.words,
        outlier_records_read=int(state.region_outliers.sum()),
    )


def simulate_tile(sched: ScheduledLayer, acts, cfg: TileConfig = DEFAULT_CONFIG) -> TileTrace:
    """Run one layer on a single unit (a tile, or a tile pair for 4b)."""
    state = _LayerState(sched, acts, cfg)
    plan = state.plan
    phase1 = stalls = phase2 = pairing = 0
    for s in range(plan.n_strips):
        for g in range(plan.n_groups):
            gcols = min(plan.padded_cols, (g + 1) * plan.group_cols) - g * plan.group_cols
            for w in range(plan.words):
                state.run_region(s, g, w)
                phase1 += gcols
                stalls += int(state.stalls[s, g])
                phase2 += plan.phase2_per_sweep
                pairing += plan.pairing_per_sweep
    busy = phase1 * cfg.pes_per_unit
    return _finish_trace(state, phase1, stalls, phase2, pairing, busy, cfg.pes_per_unit)


def simulate_chip(scheds, acts_list, cfg: TileConfig = DEFAULT_CONFIG) -> ChipTrace:
    """Run layers across cfg.tiles in lockstep.

    Strips go round-robin to units; within a round every unit serves the
    same column group and word off the shared activation broadcast, so a
    stalling SPU holds everyone: the segment pays the worst unit's stalls.
    """
    if len(scheds) != len(acts_list):
        raise ScheduleIncomplete("one activation set per scheduled layer")
    units = cfg.units
    capacity = cfg.pes_per_tile * cfg.tiles
    chip_total = 0
    chip_busy = 0
    layer_traces = []
    for sched, acts in zip(scheds, acts_list):
        state = _LayerState(sched, acts, cfg)
        plan = state.plan
        phase1 = stalls = phase2 = pairing = busy = total = 0
        for round_start in range(0, plan.n_strips, units):
            active = range(round_start, min(plan.n_strips, round_start + units))
            for g in range(plan.n_groups):
                gcols = min(plan.padded_cols, (g + 1) * plan.group_cols) - g * plan.group_cols
                for w in range(plan.words):
                    seg_stall = 0
                    for s in active:
                        state.run_region(s, g, w)
                        seg_stall = max(seg_stall, int(state.stalls[s, g]))
                    phase1 += gcols
                    stalls += seg_stall
                    phase2 += plan.phase2_per_sweep
                    pairing += plan.pairing_per_sweep
                    total += gcols + seg_stall + plan.phase2_per_sweep + plan.pairing_per_sweep
                    busy += len(active) * cfg.pes_per_unit * gcols
        trace = _finish_trace(state, phase1, stalls, phase2, pairing, busy, capacity,
                              total=total)
        layer_traces.append(trace)
        chip_total += total
        chip_busy += busy
    return ChipTrace(
        total_cycles=int(chip_total),
        busy_pe_cycles=int(chip_busy),
        idle_pe_cycles=int(chip_total * capacity - chip_busy),
        utilization=chip_busy / (chip_total * capacity) if chip_total else 0.0,
        layer_traces=layer_traces,
    )
