"""
MitLindblad Run History
Stores and manages records of recent command-line runs
"""

import json
from datetime import datetime
from typing import Any, Dict, List, Optional
from pathlib import Path


class RunEntry:
    """Represents a single run"""

    def __init__(
        self,
        command: str,
        scenario: Optional[str] = None,
        seed: Optional[int] = None,
        timestamp: Optional[str] = None,
        duration: float = 0.0,
        outputs: Optional[List[str]] = None
    ):
        self.command = command
        self.scenario = scenario
        self.seed = seed
        self.timestamp = timestamp or datetime.now().isoformat()
        self.duration = duration
        self.outputs = list(outputs or [])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "seed": self.seed,
            "timestamp": self.timestamp,
            "duration": self.duration,
            "outputs": self.outputs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunEntry':
        return cls(
            command=data.get("command", "unknown"),
            scenario=data.get("scenario"),
            seed=data.get("seed"),
            timestamp=data.get("timestamp"),
            duration=data.get("duration", 0.0),
            outputs=data.get("outputs", []),
        )

    def __str__(self) -> str:
        dt = datetime.fromisoformat(self.timestamp)
        time_str = dt.strftime("%Y-%m-%d %H:%M")
        target = f" {self.scenario}" if self.scenario else ""
        return f"[{time_str}] {self.command}{target} ({self.duration:.1f}s, {len(self.outputs)} files)"


class RunHistory:
    """Manages run history"""

    def __init__(self, history_path: Optional[str] = None, max_size: int = 50):
        """
        Initialize history manager.

        Args:
            history_path: Path to history file
            max_size: Maximum number of entries to keep
        """
        if history_path:
            self.history_path = Path(history_path)
        else:
            app_dir = Path(__file__).parent.parent
            self.history_path = app_dir / "out" / "history.json"

        self.max_size = max_size
        self._entries: List[RunEntry] = []
        self.load()

    def load(self) -> bool:
        """Load history from file"""
        try:
            if self.history_path.exists():
                with open(self.history_path, 'r', encoding='utf-8') as f:
                    data = json.load(f)

                self._entries = [
                    RunEntry.from_dict(entry)
                    for entry in data.get("entries", [])
                ]
                return True
        except (OSError, json.JSONDecodeError) as e:
            print(f"⚠ Failed to load history: {e}")
        return False

    def save(self) -> bool:
        """Save history to file"""
        try:
            self.history_path.parent.mkdir(parents=True, exist_ok=True)

            data = {
                "entries": [entry.to_dict() for entry in self._entries]
            }

            with open(self.history_path, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2)

            return True
        except OSError as e:
            print(f"⚠ Failed to save history: {e}")
            return False

    def add(
        self,
        command: str,
        scenario: Optional[str] = None,
        seed: Optional[int] = None,
        duration: float = 0.0,
        outputs: Optional[List[str]] = None
    ) -> RunEntry:
        """
        Record a finished run.

        Args:
            command: CLI subcommand
            scenario: Scenario name, if any
            seed: Master seed
            duration: Wall time in seconds
            outputs: Files written

        Returns:
            Created entry
        """
        entry = RunEntry(
            command=command,
            scenario=scenario,
            seed=seed,
            duration=duration,
            outputs=outputs,
        )

        # Most recent first
        self._entries.insert(0, entry)

        if len(self._entries) > self.max_size:
            self._entries = self._entries[:self.max_size]

        self.save()
        return entry

    def get_all(self) -> List[RunEntry]:
        return self._entries.copy()

    def latest(self, command: Optional[str] = None) -> Optional[RunEntry]:
        """Most recent entry, optionally of one subcommand"""
        for entry in self._entries:
            if command is None or entry.command == command:
                return entry
        return None

    def outputs(self, command: Optional[str] = None) -> List[str]:
        """Every file recorded, newest run first"""
        return [path for entry in self._entries
                if command is None or entry.command == command
                for path in entry.outputs]

    def clear(self) -> None:
        self._entries = []
        self.save()

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)
