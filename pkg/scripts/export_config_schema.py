"""
Write the JSON schema of ExperimentConfig next to the example configs.
Run from the repository root: PYTHONPATH=. python scripts/export_config_schema.py
"""
import json
from pathlib import Path

from src.models.schemas import ExperimentConfig

SCHEMA_PATH = Path("configs") / "schema.json"


def export_schema(path: Path = SCHEMA_PATH) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ExperimentConfig.model_json_schema(), indent=2) + "\n", encoding="utf-8")
    return path


if __name__ == "__main__":
    written = export_schema()
    print(f"✅ Wrote {written}")
