"""Judge prompt templates and rendering.

Each template body uses ``{name}`` placeholders. Rendering fails loudly when
a required placeholder is unbound; it never leaves one unresolved. Literal
braces that do not wrap a bare identifier (JSON snippets in the template
text) are left untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import TaxalignError

# Subject and granularity defaults; callers may override per run.
DEFAULT_VARIABLES = {"subject": "Climate Change", "n": "4", "m": "20"}

IRRELEVANT_TOPIC_LABEL = "Irrelevant Data"

_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class MissingPlaceholderError(TaxalignError):
    def __init__(self, names: list[str]):
        super().__init__(f"unbound placeholder(s): {', '.join(names)}")
        self.names = names


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    variables: tuple[str, ...] = field(default=())

    def render(self, bindings: dict[str, str]) -> str:
        merged = {**DEFAULT_VARIABLES, **bindings}
        missing = [v for v in self.variables if v not in merged]
        if missing:
            raise MissingPlaceholderError(missing)

        def sub(match: re.Match) -> str:
            name = match.group(1)
            if name in merged:
                return str(merged[name])
            return match.group(0)

        return _PLACEHOLDER.sub(sub, self.body)


_INITIAL_TOPIC_BODY = """\
You are an expert research curator for the subject "{subject}". Read the text
below and identify the main topics it touches, each with a short explanation
(at most {m} words). The text may come from reports, user queries, forum
posts, or generated questions, and may be written in any language; always
answer in English.

Rules:
1. A topic is a mid-level theme: not as broad as "science", not as narrow as
   a single dated measurement. Granularity guide: "{subject}: Extreme
   Weather"; "{subject}: Urban Planning"; "{subject}: Economic Impacts".
2. Write every topic as "{subject}: <related_domain>", where <related_domain>
   is a self-contained descriptor of at most n={n} words naming a concrete
   subdomain of {subject} or an interdisciplinary area connected to it.
3. Return between 1 and 3 topics. If the text has no plausible connection to
   {subject}, return exactly:
   [ {"topic":"Irrelevant Data","explanation":"None"} ]
   and nothing else (do not prefix it with "{subject}:").
4. Output a pure JSON array of objects, each with:
   - "topic": a string such as "{subject}: Economic Phenomena"
   - "explanation": what the topic means in the context of {subject}, at most
     m = {m} words.

Examples:
Text: "Why are summers getting hotter every year where I live?"
Output: [ {"topic":"{subject}: Temperature Trends","explanation":"Observed warming patterns and their perception in daily life."} ]
Text: "How do rising seas threaten coastal cities and what defenses exist?"
Output: [ {"topic":"{subject}: Sea-Level Rise","explanation":"Coastal flooding risks from rising oceans."}, {"topic":"{subject}: Coastal Adaptation","explanation":"Engineering and planning defenses for threatened coastlines."} ]
Text: "Draft a company memo on cutting freight emissions."
Output: [ {"topic":"{subject}: Freight Emissions","explanation":"Greenhouse gas output of goods transport."}, {"topic":"{subject}: Corporate Sustainability","explanation":"Company-level action to reduce climate impact."} ]
Text: "Effect of drought on wheat harvests in semi-arid regions."
Output: [ {"topic":"{subject}: Agriculture","explanation":"Crop production under changing climate conditions."}, {"topic":"{subject}: Drought Impacts","explanation":"Consequences of prolonged water scarcity."} ]
Text: "What's a good pasta recipe for date night?"
Output: [ {"topic":"Irrelevant Data","explanation":"None"} ]
Text: "Recommend me a horror movie from the 90s."
Output: [ {"topic":"Irrelevant Data","explanation":"None"} ]

Text:
{text}
"""

_TOPIC_MERGING_BODY = """\
You are a meticulous topic curator. Each topic is a JSON object with two
keys: "topic" (the label) and "explanation" (what it covers). The array below
lists first the parent topic and then the candidate topics; every object
carries an "id" field holding its 1-based row index as a string. Use those
"id" values when selecting.

{items}

Merge into the parent only those candidates whose label AND explanation
clearly denote the same concept as the parent.

Return a JSON object with exactly three keys:
{ "merged_ids": [ ... candidate ids as strings ... ],
  "parent_topic": " ... unchanged or clarified label ... ",
  "parent_explanation": " ... concise explanation ... " }

Rules:
1. Merge only when the candidate's label is a near-synonym of the parent's at
   the same granularity and the explanations entail each other in both
   directions. Do not merge sibling areas.
2. When unsure, do not merge: an empty "merged_ids" beats a risky merge. Only
   merge high-confidence near-duplicates.
3. Never merge into a broader or narrower topic.
4. Do not include the parent itself in "merged_ids".
5. Select ids only from the provided list; never invent ids.
6. If nothing should merge, return an empty "merged_ids" array and repeat the
   original "parent_topic" and "parent_explanation".
7. You may clarify "parent_topic", but it must keep the required format:
   "{subject}: <related_domain>" with <related_domain> of at most n={n}
   words, concrete, and free of vague fillers like "issues" or "overview".
   The explanation stays within m={m} words.
"""

_TOPIC_REASSIGNMENT_BODY = """\
You are an expert in {subject}. Classify the input text into at most 3 core
topics from the taxonomy below.

Decision rules:
1. Pick only core, directly relevant topics; skip marginal connections.
2. Up to 3 topics; fewer is fine.
3. If the text maps to no topic or is unrelated to {subject}, return the
   Others code alone, as the only item:
   [ {"topic":"F1. Others"} ]
4. Never invent topics; use only the taxonomy provided.

Output format (STRICT): a JSON array of 1-3 objects, each with the single
field "topic", e.g.
[ {"topic":"A5. Climate Modeling"}, {"topic":"E1. Climate Policy, Governance & Finance Mechanism"} ]

Taxonomy:
{taxonomy}

Examples:
Text: "Will solar panels ever fully replace coal plants?"
Output: [ {"topic":"E2. Energy Transition"} ]
Text: "How reliable are CMIP6 projections of regional rainfall?"
Output: [ {"topic":"A5. Climate Modeling"} ]
Text: "Heat waves are filling our ERs; how should hospitals prepare?"
Output: [ {"topic":"D3. Public Health Adaptation"}, {"topic":"C3. Human Health & Well-being"} ]
Text: "Best sci-fi novels of the decade?"
Output: [ {"topic":"F1. Others"} ]

Text:
{text}
"""

_QUESTION_TYPE_BODY = """\
You are a query classification expert. Given the user query Q below, classify
it along two independent axes:
AXIS A - INTENT (what the user wants to achieve)
AXIS B - FORM (the most appropriate shape of the answer)
Queries may come from any source and any language; always answer in English.

Classification rules:
1. For both INTENT and FORM, prefer a single category when possible.
2. If the query genuinely fits several categories, assign all that apply, up
   to 3.
3. When the FORM is ambiguous (e.g. an explanation could be concise or
   detailed), assign the plausible categories, up to 3.
4. List multiple assignments in priority order, most relevant first.
5. If no category fits, use the matching Others category (codes marked "z").
6. Output must be English and exactly this JSON shape:
   { "intent": ["INTENT_xx. Name", ...], "form": ["FORM_xx. Name", ...] }
7. Output nothing outside the JSON object.

Intent taxonomy:
{intent_taxonomy}

Form taxonomy:
{form_taxonomy}

Examples:
Q: "What is the boiling point of methane at 1 atm?"
Output: { "intent": ["INTENT_1a. Fact Lookup"], "form": ["FORM_1a. Concise Value(s) / Entity(ies)"] }
Q: "Why do El Nino years shift rainfall patterns?"
Output: { "intent": ["INTENT_2a. Reasoning / Causal Analysis"], "form": ["FORM_2a. Concise Paragraph"] }
Q: "Write an email inviting colleagues to a sustainability workshop."
Output: { "intent": ["INTENT_6a. Operational Writing"], "form": ["FORM_6a. Email / Letter"] }
Q: "List three ways cities cope with flooding."
Output: { "intent": ["INTENT_1a. Fact Lookup", "INTENT_3a. General Advice"], "form": ["FORM_3a. Item List"] }

Q:
{text}
"""

_RELEVANCE_FILTER_BODY = """\
You decide whether a conversation opener is related to the subject
"{subject}". Related means the text asks about, discusses, or requests work
on {subject} or its direct consequences, mitigation, or adaptation.

Answer with a single word: "yes" if related, "no" otherwise.

Text:
{text}
"""

TEMPLATES: dict[str, PromptTemplate] = {
    "initial_topic_generation": PromptTemplate(
        template_id="initial_topic_generation",
        body=_INITIAL_TOPIC_BODY,
        variables=("subject", "n", "m", "text"),
    ),
    "topic_merging": PromptTemplate(
        template_id="topic_merging",
        body=_TOPIC_MERGING_BODY,
        variables=("subject", "n", "m", "items"),
    ),
    "topic_reassignment": PromptTemplate(
        template_id="topic_reassignment",
        body=_TOPIC_REASSIGNMENT_BODY,
        variables=("subject", "taxonomy", "text"),
    ),
    "question_type_classification": PromptTemplate(
        template_id="question_type_classification",
        body=_QUESTION_TYPE_BODY,
        variables=("intent_taxonomy", "form_taxonomy", "text"),
    ),
    "relevance_filter": PromptTemplate(
        template_id="relevance_filter",
        body=_RELEVANCE_FILTER_BODY,
        variables=("subject", "text"),
    ),
}


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise TaxalignError(f"unknown template {template_id!r}") from None
