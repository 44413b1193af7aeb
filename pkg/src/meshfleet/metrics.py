"""Run metrics: append-only line-delimited records with a checksum that
makes replays comparable bit-for-bit.

The header echoes the full scenario (defaults included) and the seed; the
checksum covers every non-header record, so two runs of the same scenario
and seed must produce identical digests.
"""

import hashlib
import json

FORMAT_VERSION = 1


def _canon(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=True)


def round_floats(value, digits: int = 9):
    """Recursively round floats so records don't carry repr noise."""
    if isinstance(value, float):
        return round(value, digits)
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    return value


class MetricsLog:
    def __init__(self, scenario_echo: dict, scenario_text: str, seed: int):
        self.header = {
            "type": "header",
            "format_version": FORMAT_VERSION,
            "seed": seed,
            "scenario": scenario_echo,
            "scenario_text": scenario_text,
        }
        self.records: list[dict] = []

    def append(self, record: dict) -> None:
        self.records.append(round_floats(record))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for rec in self.records:
            h.update(_canon(rec).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def summary(self) -> dict:
        for rec in reversed(self.records):
            if rec.get("type") == "summary":
                return rec
        return {}

    def write(self, path: str) -> None:
        header = dict(self.header)
        header["checksum"] = self.checksum()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_canon(header) + "\n")
            for rec in self.records:
                fh.write(_canon(rec) + "\n")

    @staticmethod
    def read(path: str) -> tuple[dict, list[dict]]:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"{path}: empty metrics log")
        header = json.loads(lines[0])
        if header.get("type") != "header":
            raise ValueError(f"{path}: first record is not a header")
        records = [json.loads(ln) for ln in lines[1:]]
        return header, records


def compare_records(old: list[dict], new: list[dict]) -> dict:
    """Replay verdict: identical, or the first point of divergence."""
    n = min(len(old), len(new))
    for i in range(n):
        if _canon(old[i]) != _canon(new[i]):
            return {"verdict": "divergent", "first_divergence": i,
                    "old": old[i], "new": new[i]}
    if len(old) != len(new):
        return {"verdict": "divergent", "first_divergence": n,
                "old_len": len(old), "new_len": len(new)}
    return {"verdict": "identical", "records": n}
