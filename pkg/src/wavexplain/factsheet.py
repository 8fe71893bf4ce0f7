"""Explainability fact sheet comparing LIME with Gini importance.

Rows are static data. A choice row lists its options and the ones checked
for each system; a text row holds free text. Only the LIME soundness row is
computed from a run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

SECTIONS = (
    ("F", "Functional Requirements"),
    ("O", "Operational Requirements"),
    ("U", "Usability Requirements"),
    ("S", "Safety Requirements"),
    ("V", "Validation Requirements"),
)

YES_NO = ("Yes", "No")


@dataclass(frozen=True)
class Choice:
    options: tuple
    checked: tuple

    def __post_init__(self):
        unknown = set(self.checked) - set(self.options)
        if unknown:
            raise ValueError(f"checked options {sorted(unknown)} not among {self.options}")

    def render(self) -> str:
        return " ".join(f"[x] {o}" if o in self.checked else f"[ ] {o}" for o in self.options)

    def to_dict(self) -> dict:
        return {"options": list(self.options), "checked": list(self.checked)}


@dataclass(frozen=True)
class Text:
    text: str

    def render(self) -> str:
        return self.text

    def to_dict(self) -> dict:
        return {"text": self.text}


Entry = Union[Choice, Text]


@dataclass(frozen=True)
class Row:
    id: str
    title: str
    lime: Entry
    gini: Entry

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "lime": self.lime.to_dict(),
                "gini": self.gini.to_dict()}


def _yn(lime: str, gini: str) -> tuple:
    return Choice(YES_NO, (lime,)), Choice(YES_NO, (gini,))


def _same(options, checked) -> tuple:
    c = Choice(tuple(options), tuple(checked))
    return c, c


_SUPERVISION = ("Supervised", "Unsupervised", "Semi-supervised", "Reinforcement")
_PROBLEM = ("Classification", "Regression", "Clustering")
_TARGET = ("Data", "Models", "Prediction")
_SCOPE = ("Local", "Cohort", "Global")
_MODEL_CLASS = ("Model-agnostic", "Model class-specific", "Model-specific")
_RELATION = ("Ante-hoc", "Post-hoc", "(Global) mimic approach")
_FEATURES = ("Tabular", "Images (convert to binary)", "Text (convert to binary)")
_FAMILY = ("Association between antecedents and consequent", "Contrasts and differences",
           "Casual mechanisms")
_MEDIUM = ("(statistical) summarization", "Visualization", "Textualization",
           "Formal argumentation", "Mixture of above")
_DOMAIN = ("Original domain", "Transformed domain", "Interpretable data representation")
_INVARIANCE = ("Consistent", "Inconsistent", "Stable", "Unstable")

LIME_COMPLEXITY = "Ω(g)"
GINI_COMPLEXITY = "O(fc)"
SOUNDNESS_ROW = "U1"

_STATIC = [
    ("F1", "Problem supervision level", *_same(_SUPERVISION, ("Supervised", "Semi-supervised"))),
    ("F2", "Problem Type", Choice(_PROBLEM, ("Classification", "Regression")),
     Choice(_PROBLEM, ("Classification",))),
    ("F3", "Explanation Target", Choice(_TARGET, ("Prediction",)),
     Choice(_TARGET, ("Models", "Prediction"))),
    ("F4", "Explanation Breadth/Scope", Choice(_SCOPE, ("Local",)), Choice(_SCOPE, ("Global",))),
    ("F5", "Computational Complexity", Text(f"{LIME_COMPLEXITY} g is the model complexity"),
     Text(f"{GINI_COMPLEXITY} f is the number of feature, and c is the number of category "
          "of each feature")),
    ("F6", "Applicable Model Class", Choice(_MODEL_CLASS, ("Model-agnostic",)),
     Choice(_MODEL_CLASS, ("Model-specific",))),
    ("F7", "Relation to the Predictive System", Choice(_RELATION, ("Post-hoc",)),
     Choice(_RELATION, ("Ante-hoc",))),
    ("F8", "Compatible Feature Types", *_same(_FEATURES, _FEATURES)),
    ("F9", "Caveats and Assumptions", Text(""), Text("")),
    ("O1", "Explanation Family", *_same(_FAMILY, _FAMILY[:1])),
    ("O2", "Explanatory Medium", *_same(_MEDIUM, ("Visualization",))),
    ("O3", "System Interaction", *_same(("Static", "Interactive"), ("Static",))),
    ("O4", "Explanation Domain",
     Choice(_DOMAIN, ("Original domain", "Interpretable data representation")),
     Choice(_DOMAIN, ("Original domain",))),
    ("O5", "Data and Model Transparency",
     *_same(("Transparent (tabular data)", "Opaque"), ("Transparent (tabular data)",))),
    ("O6", "Explanation Audience",
     *_same(("Expert", "General knowledge", "Lay audience"), ("General knowledge",))),
    ("O7", "Function of Explanation",
     *_same(("Explaining", "Accountability", "Fairness"), ("Explaining", "Accountability"))),
    ("O8", "Causality vs. Actionability", *_same(("Actionable", "Casual"), ("Actionable",))),
    ("O9", "Trust vs. Performance", Choice(("Trust", "Predictive performance"), ("Trust",)),
     Choice(("Trust", "Predictive performance"), ("Trust", "Predictive performance"))),
    ("O10", "Provenance", *_same(("Predictive model", "Dataset"), ("Predictive model", "Dataset"))),
    ("U1", "Soundness", Text("R² = 0.56."), Text("Not applicable")),
    ("U2", "Completeness", *_yn("No", "Yes")),
    ("U3", "Contextfulness", *_yn("No", "No")),
    ("U4", "Interactiveness", *_yn("No", "No")),
    ("U5", "Actionability", *_yn("No", "No")),
    ("U6", "Chronology", *_yn("No", "No")),
    ("U7", "Coherence", *_yn("No", "No")),
    ("U8", "Novelty", *_yn("No", "No")),
    ("U9", "Complexity", *_yn("No", "No")),
    ("U10", "Personalisation", *_yn("No", "No")),
    ("U11", "Parsimony", *_yn("Yes", "No")),
    ("S1", "Information leakage", *_yn("No", "Yes")),
    ("S2", "Explanation Misuse", *_yn("Yes", "Yes")),
    ("S3", "Explanation Invariance", Choice(_INVARIANCE, ("Consistent", "Unstable")),
     Choice(_INVARIANCE, ("Consistent", "Stable"))),
    ("S4", "Explanation Quality", Text("Not considered"), Text("Not applicable")),
    ("V1", "User Studies", Text("Section 6 of LIME paper"), Text("Not applicable")),
    ("V2", "Synthetic Experiments", Text("Section 5 of LIME paper"), Text("Not applicable")),
]

STATIC_ROWS = tuple(Row(*r) for r in _STATIC)
ROW_IDS = tuple(r.id for r in STATIC_ROWS)


def format_soundness(mean_r2: Optional[float]) -> str:
    if mean_r2 is None or not math.isfinite(mean_r2):
        return "R² = undefined"
    return f"R² = {mean_r2:.2f}"


@dataclass
class FactSheet:
    rows: tuple
    lime_mean_r2: Optional[float]

    def row(self, row_id: str) -> Row:
        for r in self.rows:
            if r.id == row_id:
                return r
        raise KeyError(row_id)

    def to_dict(self) -> dict:
        r2 = self.lime_mean_r2
        return {
            "computed": {
                "lime_mean_r2": r2 if r2 is not None and math.isfinite(r2) else None,
                "lime_complexity": LIME_COMPLEXITY,
                "gini_complexity": GINI_COMPLEXITY,
            },
            "sections": [{"prefix": p, "title": t,
                          "rows": [r.to_dict() for r in self.rows if _prefix(r.id) == p]}
                         for p, t in SECTIONS],
        }

    def render(self) -> str:
        lines = ["Explainability fact sheet: LIME vs Gini importance", ""]
        for prefix, title in SECTIONS:
            lines.append(title)
            for r in self.rows:
                if _prefix(r.id) == prefix:
                    lines.append(f"  {r.id}: {r.title}")
                    lines.append(f"    LIME: {r.lime.render()}")
                    lines.append(f"    Gini: {r.gini.render()}")
            lines.append("")
        return "\n".join(lines)


def _prefix(row_id: str) -> str:
    return row_id[0]


def factsheet_emit(mean_r2: Optional[float]) -> FactSheet:
    """Static rows with the soundness row set from a run's mean local R^2."""
    rows = tuple(Row(r.id, r.title, Text(format_soundness(mean_r2)), r.gini)
                 if r.id == SOUNDNESS_ROW else r for r in STATIC_ROWS)
    return FactSheet(rows, mean_r2)
