"""Fixed two-level taxonomies: topics, user intents, expected answer forms.

The shipped taxonomies live in ``data/*.json`` and are plain data: users can
swap in their own files for other domains. Loaders validate shape (25 fine
topics plus exactly one Others code; 38 intent and 38 form codes; every
non-Others intent carries at least one primary knowledge dimension).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError

KNOWLEDGE_DIMS = ("F", "C", "P", "M")


@dataclass(frozen=True)
class TopicInfo:
    code: str
    name: str
    description: str
    category: str
    category_name: str

    @property
    def display(self) -> str:
        return f"{self.code}. {self.name}"


def _load_json(path: Optional[str | Path], default_name: str) -> dict:
    if path is None:
        with resources.files("taxalign.data").joinpath(default_name).open(
            "r", encoding="utf-8"
        ) as fp:
            return json.load(fp)
    return json.loads(Path(path).read_text(encoding="utf-8"))


class TopicTaxonomy:
    """Five coarse categories, 25 fine topics, one catch-all Others code."""

    def __init__(self, data: dict):
        self.subject = data.get("subject", "Climate Change")
        self.fine: list[TopicInfo] = []
        self.category_names: dict[str, str] = {}
        for cat in data["categories"]:
            self.category_names[cat["code"]] = cat["name"]
            for t in cat["topics"]:
                self.fine.append(
                    TopicInfo(
                        code=t["code"],
                        name=t["name"],
                        description=t.get("description", ""),
                        category=cat["code"],
                        category_name=cat["name"],
                    )
                )
        o = data["others"]
        self.others = TopicInfo(
            code=o["code"],
            name=o.get("name", "Others"),
            description=o.get("description", ""),
            category=o.get("category", "F"),
            category_name=o.get("category_name", "Others"),
        )
        self.category_names.setdefault(self.others.category, self.others.category_name)
        self._by_code = {t.code: t for t in self.fine}
        self._by_code[self.others.code] = self.others
        self._validate()

    def _validate(self) -> None:
        if len(self.fine) != 25:
            raise ConfigError(f"topic taxonomy needs 25 fine topics, found {len(self.fine)}")
        if len(self._by_code) != len(self.fine) + 1:
            raise ConfigError("topic codes must be unique")

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "TopicTaxonomy":
        return cls(_load_json(path, "topic_taxonomy.json"))

    def valid_code(self, code: str) -> bool:
        return code in self._by_code

    def is_others(self, code: str) -> bool:
        return code == self.others.code

    def info(self, code: str) -> TopicInfo:
        try:
            return self._by_code[code]
        except KeyError:
            raise ConfigError(f"unknown topic code {code!r}") from None

    def codes(self, include_others: bool = False) -> list[str]:
        out = [t.code for t in self.fine]
        if include_others:
            out.append(self.others.code)
        return out

    def category_of(self, code: str) -> str:
        return self.info(code).category

    def render_prompt_block(self) -> str:
        lines = []
        current = None
        for t in self.fine:
            if t.category != current:
                current = t.category
                lines.append(f"{t.category}. {t.category_name}")
            lines.append(f"  - {t.display}: {t.description}")
        lines.append(f"{self.others.category}. {self.others.category_name}")
        lines.append(f"  - {self.others.display}: {self.others.description}")
        return "\n".join(lines)


@dataclass(frozen=True)
class QuestionType:
    code: str
    name: str
    description: str
    category: str
    category_name: str
    is_others: bool = False
    knowledge_primary: tuple[str, ...] = field(default=())
    knowledge_auxiliary: tuple[str, ...] = field(default=())

    @property
    def display(self) -> str:
        return f"{self.code}. {self.name}"


class QuestionDimension:
    """One axis of the question taxonomy (intents or forms): 8 categories
    with 29 types, one per-category Others each, plus a global Others."""

    def __init__(self, data: dict, dimension: str, with_knowledge: bool):
        self.dimension = dimension
        self.prefix = data["prefix"]
        self.types: list[QuestionType] = []
        self.category_names: dict[str, str] = {}
        for cat in data["categories"]:
            self.category_names[cat["code"]] = cat["name"]
            for t in cat["types"]:
                knowledge = t.get("knowledge", {}) if with_knowledge else {}
                primary = tuple(knowledge.get("primary", ()))
                if with_knowledge and not primary:
                    raise ConfigError(
                        f"{t['code']} has no primary knowledge dimension"
                    )
                for k in (*primary, *knowledge.get("auxiliary", ())):
                    if k not in KNOWLEDGE_DIMS:
                        raise ConfigError(f"unknown knowledge dimension {k!r}")
                self.types.append(
                    QuestionType(
                        code=t["code"],
                        name=t["name"],
                        description=t.get("description", ""),
                        category=cat["code"],
                        category_name=cat["name"],
                        knowledge_primary=primary,
                        knowledge_auxiliary=tuple(knowledge.get("auxiliary", ())),
                    )
                )
            others = cat["others"]
            self.types.append(
                QuestionType(
                    code=others["code"],
                    name=others.get("name", "Others"),
                    description="Edge cases within this category.",
                    category=cat["code"],
                    category_name=cat["name"],
                    is_others=True,
                )
            )
        g = data["global_others"]
        self.types.append(
            QuestionType(
                code=g["code"],
                name=g.get("name", "Others"),
                description="Does not fit any category.",
                category=g.get("category", "9"),
                category_name="Others",
                is_others=True,
            )
        )
        self.category_names.setdefault(g.get("category", "9"), "Others")
        self._by_code = {t.code: t for t in self.types}
        if len(self._by_code) != len(self.types):
            raise ConfigError(f"duplicate {dimension} codes")
        if len(self.types) != 38:
            raise ConfigError(
                f"{dimension} taxonomy needs 38 codes, found {len(self.types)}"
            )

    def valid_code(self, code: str) -> bool:
        return code in self._by_code

    def is_others(self, code: str) -> bool:
        return self.info(code).is_others

    def info(self, code: str) -> QuestionType:
        try:
            return self._by_code[code]
        except KeyError:
            raise ConfigError(f"unknown {self.dimension} code {code!r}") from None

    def codes(self) -> list[str]:
        return [t.code for t in self.types]

    def others_codes(self) -> set[str]:
        return {t.code for t in self.types if t.is_others}

    def category_of(self, code: str) -> str:
        return f"{self.prefix}_{self.info(code).category}"

    def render_prompt_block(self) -> str:
        lines = []
        current = None
        for t in self.types:
            if t.category != current:
                current = t.category
                lines.append(f"{self.prefix} category {t.category}: {t.category_name}")
            marker = ""
            if t.knowledge_primary:
                marker = f" [knowledge: {'/'.join(t.knowledge_primary)}]"
            lines.append(f"  - {t.display}: {t.description}{marker}")
        return "\n".join(lines)


class QuestionTaxonomy:
    def __init__(self, data: dict):
        self.intents = QuestionDimension(data["intents"], "intent", with_knowledge=True)
        self.forms = QuestionDimension(data["forms"], "form", with_knowledge=False)
        self.knowledge_names = dict(
            data.get("knowledge_dimensions", dict(zip(KNOWLEDGE_DIMS, KNOWLEDGE_DIMS)))
        )

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "QuestionTaxonomy":
        return cls(_load_json(path, "question_taxonomy.json"))

    def dimension(self, name: str) -> QuestionDimension:
        if name == "intent":
            return self.intents
        if name == "form":
            return self.forms
        raise ConfigError(f"unknown question dimension {name!r}")
