"""
Rebuild a dataset's manifest.json from the scene files in its directory.

Use this when the manifest has been deleted or corrupted, or after scene files
were added or removed by hand. Files that do not parse as valid scenes are
skipped with a warning and left out of the manifest.

Usage:
    python scripts/rebuild_manifest.py <dataset_dir>

Example:
    python scripts/rebuild_manifest.py data/turn
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.storage.scene_repository import SceneRepository  # noqa: E402


def main() -> None:
    if len(sys.argv) != 2:
        print("Usage: python scripts/rebuild_manifest.py <dataset_dir>")
        sys.exit(1)

    dataset_dir = Path(sys.argv[1])
    if not dataset_dir.is_dir():
        print(f"Error: directory not found: {dataset_dir}")
        sys.exit(1)

    print(f"Scanning {dataset_dir}...")
    repository = SceneRepository(dataset_dir)
    manifest = repository.rebuild_manifest()
    print(f"  Found {manifest.count} scene file(s).")
    print(f"  Written → {repository.manifest_path}")


if __name__ == "__main__":
    main()
