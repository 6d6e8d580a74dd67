"""Per-cycle event log for slice and fabric runs."""

from pathlib import Path
from typing import Any, Dict, List, Tuple

import pandas as pd

TRACE_COLUMNS = ["cycle", "slice_id", "spe_id", "event", "value"]


class TraceEvent:
    """Trace event names."""

    MAC = "mac"
    RESULT = "result"
    EXTRACT = "extract"
    BUFFER = "buffer"
    STALL = "stall"


class TraceRecorder:
    """Collects trace events in memory and exports them as CSV."""

    def __init__(self) -> None:
        self._rows: List[Tuple[int, str, str, str, Any]] = []

    def __len__(self) -> int:
        return len(self._rows)

    def record(
        self, cycle: int, slice_id: str, spe_id: str, event: str, value: Any = ""
    ) -> None:
        self._rows.append((cycle, slice_id, spe_id, event, value))

    def to_frame(self) -> pd.DataFrame:
        """Return all events as a DataFrame with the trace columns."""
        return pd.DataFrame(self._rows, columns=TRACE_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def mac_cycles(self) -> Dict[Tuple[str, str], List[int]]:
        """Cycles on which each (slice, SPE) executed a MAC, in order."""
        cycles: Dict[Tuple[str, str], List[int]] = {}
        for cycle, slice_id, spe_id, event, _ in self._rows:
            if event == TraceEvent.MAC:
                cycles.setdefault((slice_id, spe_id), []).append(cycle)
        return cycles

    def mac_gaps(self) -> Dict[Tuple[str, str], List[int]]:
        """Idle cycles between consecutive MACs of each SPE."""
        return {
            spe: [later - earlier - 1 for earlier, later in zip(cycles, cycles[1:])]
            for spe, cycles in self.mac_cycles().items()
        }

    def valid_runs(self, slice_id: str) -> List[int]:
        """
        Lengths of valid_out runs of a slice, one run per extracted tile.

        A run starts at every column-0 extraction and continues while the
        following columns come out on consecutive cycles.
        """
        extracts = sorted(
            (cycle, int(value))
            for cycle, sid, _, event, value in self._rows
            if event == TraceEvent.EXTRACT and sid == slice_id
        )
        runs: List[int] = []
        previous = None
        for cycle, column in extracts:
            continues = (
                previous is not None and column != 0 and cycle == previous + 1
            )
            if continues:
                runs[-1] += 1
            else:
                runs.append(1)
            previous = cycle
        return runs

    def max_buffer_occupancy(self) -> int:
        occupancy = [
            int(value) for _, _, _, event, value in self._rows
            if event == TraceEvent.BUFFER
        ]
        return max(occupancy, default=0)
