"""
Checkpointed, parallel sweep runner.

Each cell writes ``<out>/cells/<key>.json`` as soon as it finishes, so an
interrupted sweep resumes from the cells already on disk. Only the main
thread writes files; the final CSV is sorted by cell key so its bytes do not
depend on completion order or worker count.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from tqdm import tqdm

from core.bench.config import BenchConfig
from core.bench.io import read_json, write_csv, write_json
from core.bench.presets import Preset, SweepCell, make_row, row_sort_key
from core.utils.logger import Logger


@dataclass
class SweepResult:
    """
    Attributes:
        rows: All rows in sorted order
        csv_path: Where the rows were written
        completed: Cells that finished in this run or were resumed
        failed: Keys of cells that raised
        resumed: Keys of cells loaded from checkpoints
    """
    rows: List[Dict[str, Any]]
    csv_path: Path
    completed: int = 0
    failed: List[str] = field(default_factory=list)
    resumed: List[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "ok" if not self.failed else "partial"


class SweepRunner:
    """Runs every cell of a preset grid on a thread pool."""

    def __init__(self, preset: Preset, config: BenchConfig, out_dir: Path, max_workers: Optional[int] = None,
                 grid_axes: Optional[Dict[str, Any]] = None, show_progress: bool = True,
                 progress_callback: Optional[Callable[[str], None]] = None):
        self.preset = preset
        self.config = preset.configure(config)
        self.grid = preset.grid(grid_axes)
        self.out_dir = Path(out_dir)
        self.cells_dir = self.out_dir / "cells"
        self.max_workers = max_workers or self.config.workers
        self.show_progress = show_progress
        self.progress_callback = progress_callback
        self.logger = Logger("SweepRunner").logger

    def _update_progress(self, message: str) -> None:
        if self.progress_callback:
            self.progress_callback(message)
        self.logger.debug(message)

    def _fingerprint(self) -> Dict[str, Any]:
        """Config fields that change cell results; worker count and paths do not."""
        data = self.config.to_dict()
        data.pop('workers', None)
        data.pop('output', None)
        return data

    def _cell_path(self, cell: SweepCell) -> Path:
        return self.cells_dir / f"{cell.key}.json"

    def load_existing_results(self) -> Dict[str, List[Dict[str, Any]]]:
        """Rows of every cell already checkpointed with status ok."""
        existing: Dict[str, List[Dict[str, Any]]] = {}
        if not self.cells_dir.exists():
            return existing
        for path in sorted(self.cells_dir.glob("*.json")):
            try:
                data = read_json(path)
            except (OSError, ValueError) as e:
                self.logger.warning(f"Ignoring unreadable checkpoint {path}: {str(e)}")
                continue
            horizons = tuple(data.get('cell', {}).get('horizons', ()))
            if data.get('status') == 'ok' and data.get('fingerprint') == self._fingerprint() \
                    and horizons == self.grid.horizons:
                existing[data['cell_key']] = data['rows']
        return existing

    def _run_cell(self, cell: SweepCell) -> List[Dict[str, Any]]:
        return self.preset.run_cell(cell, self.config)

    def _checkpoint(self, cell: SweepCell, rows: List[Dict[str, Any]], status: str, error: str = "") -> None:
        write_json(self._cell_path(cell), {'cell_key': cell.key, 'cell': cell.to_dict(), 'status': status,
                                           'error': error, 'rows': rows, 'config': self.config.to_dict(),
                                           'fingerprint': self._fingerprint()})

    def _failure_rows(self, cell: SweepCell) -> List[Dict[str, Any]]:
        return [make_row("", cell.policy_kind, cell.n, H, 'error', float('nan'), seed=cell.seed, status="failed")
                for H in cell.horizons]

    def run(self) -> SweepResult:
        cells = self.preset.cells(self.grid)
        existing = self.load_existing_results()
        pending = [c for c in cells if c.key not in existing]
        self.logger.info(f"Sweep '{self.preset.name}': {len(cells)} cells, {len(existing)} resumed, "
                         f"{len(pending)} to run on {self.max_workers} workers")

        results: Dict[str, List[Dict[str, Any]]] = {c.key: existing[c.key] for c in cells if c.key in existing}
        failed: List[str] = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {executor.submit(self._run_cell, cell): cell for cell in pending}
            progress = tqdm(total=len(pending), desc=self.preset.name, disable=not self.show_progress)
            for future in as_completed(futures):
                cell = futures[future]
                try:
                    rows = future.result()
                    self._checkpoint(cell, rows, "ok")
                    self._update_progress(f"Cell {cell.key} done ({len(rows)} rows)")
                except Exception as e:
                    error_msg = f"Cell {cell.key} failed: {str(e)}"
                    self.logger.error(error_msg)
                    rows = self._failure_rows(cell)
                    self._checkpoint(cell, rows, "failed", str(e))
                    failed.append(cell.key)
                results[cell.key] = rows
                progress.update(1)
            progress.close()

        rows = [row for cell in sorted(cells, key=lambda c: c.sort_key) for row in results[cell.key]]
        rows = sorted(rows + self.preset.summarize(rows, self.config), key=row_sort_key)
        csv_path = write_csv(self.out_dir / f"{self.preset.name}.csv", rows)
        write_json(self.out_dir / f"{self.preset.name}.json", {
            'preset': self.preset.name,
            'grid': self.grid.model_dump(mode="json"),
            'config': self.config.to_dict(),
            'cells': len(cells),
            'failed': sorted(failed),
        })
        if failed:
            self.logger.warning(f"Sweep '{self.preset.name}' finished with {len(failed)} failed cells")
        else:
            self.logger.info(f"Sweep '{self.preset.name}' finished: {len(rows)} rows in {csv_path}")
        return SweepResult(rows=rows, csv_path=csv_path, completed=len(cells) - len(failed), failed=sorted(failed),
                           resumed=sorted(c.key for c in cells if c.key in existing))


def run_sweep(preset: Preset, config: BenchConfig, out_dir: Path, max_workers: Optional[int] = None,
              grid_axes: Optional[Dict[str, Any]] = None, show_progress: bool = True) -> SweepResult:
    return SweepRunner(preset, config, out_dir, max_workers=max_workers, grid_axes=grid_axes,
                       show_progress=show_progress).run()
