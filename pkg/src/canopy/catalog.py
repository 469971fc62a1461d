"""Species descriptions served beside predictions.

The catalog is an editable UTF-8 JSON file mapping label to display
name and description, kept outside the model bundle so curators can
rewrite prose without retraining.  Lookup is total: a label with no
entry gets a fallback description, never an error.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from .errors import CatalogError

MAX_DESCRIPTION_CHARS = 2000
FALLBACK_DESCRIPTION = "No introduction is available for this species yet."


@dataclass(frozen=True)
class SpeciesInfo:
    display_name: str
    description: str


class SpeciesCatalog:
    def __init__(self, entries: Optional[Mapping[str, SpeciesInfo]] = None) -> None:
        self._entries = dict(entries or {})

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, label: str) -> bool:
        return label in self._entries

    def labels(self) -> list:
        return sorted(self._entries)

    def info(self, label: str) -> SpeciesInfo:
        entry = self._entries.get(label)
        if entry is None:
            return SpeciesInfo(display_name=label, description=FALLBACK_DESCRIPTION)
        return entry

    def description(self, label: str) -> str:
        return self.info(label).description

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SpeciesCatalog":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CatalogError(f"catalog file {path} does not exist") from None
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CatalogError(f"cannot read catalog file {path}: {exc}") from exc
        return cls._from_mapping(raw, source=str(path))

    @classmethod
    def _from_mapping(cls, raw, source: str) -> "SpeciesCatalog":
        if not isinstance(raw, dict):
            raise CatalogError(f"catalog {source} must be an object mapping label to entry")
        entries = {}
        for label, body in raw.items():
            if not isinstance(body, dict):
                raise CatalogError(f"catalog entry for {label!r} must be an object")
            description = body.get("description", FALLBACK_DESCRIPTION)
            if not isinstance(description, str):
                raise CatalogError(f"description for {label!r} must be a string")
            if len(description) > MAX_DESCRIPTION_CHARS:
                raise CatalogError(
                    f"description for {label!r} is {len(description)} chars; "
                    f"limit is {MAX_DESCRIPTION_CHARS}"
                )
            display = body.get("display_name", label)
            if not isinstance(display, str) or not display.strip():
                raise CatalogError(f"display_name for {label!r} must be a non-empty string")
            entries[label] = SpeciesInfo(display_name=display, description=description)
        return cls(entries)

    @classmethod
    def bundled(cls) -> "SpeciesCatalog":
        """The placeholder catalog shipped inside the package."""
        text = resources.files("canopy").joinpath("data/species_catalog.json").read_text("utf-8")
        return cls._from_mapping(json.loads(text), source="packaged species_catalog.json")
