#!/usr/bin/env python3
"""Regenerate the golden end-to-end fixtures under tests/data/golden/.

The mock backend contract is a prompt-hash -> response map, and hashes
cannot be authored by hand. This script therefore runs the pipeline once
with a deterministic rule-based judge wrapped in a recorder, writes the
recorded fixture map, replays the pipeline from the fixture map alone,
verifies the two bundles match byte for byte, audits the known annotations,
and installs the corpus, fixtures, and golden bundle.

Run from the repository root:

    python3 tools/gen_golden_fixtures.py
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from taxalign.gateway import MockBackend, prompt_hash  # noqa: E402
from taxalign.pipeline import Pipeline, PipelineConfig  # noqa: E402

# --- the synthetic corpus ---------------------------------------------

R454C = "What is the Global Warming Potential of R-454C?"
WATER_MCQ = (
    "Water management is a critical adaptation strategy for climate change. "
    "Which of the following does not support this position A. Technology should "
    "focus on use of marine water resources B. Finding alternative water stores "
    "C. Implementing legislation to ensure the 'fair' distribution of water "
    "D. Increasing water conservation in periods of water surplus"
)
REDDIT_WINTER = (
    "Former climate change denier here. This has been the hottest winter I've "
    "experienced (in Texas). Is this a result of climate change or a coincidence?"
)

# theme -> (mined topic label, explanation, reassign labels, intents, forms)
THEMES = {
    "solar": (
        "Climate Change: Solar Power",
        "Electricity generated from sunlight",
        ["E2. Energy Transition"],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "wind turbine": (
        "Climate Change: Wind Power",
        "Electricity generated from wind",
        ["E2. Energy Transition"],
        ["INTENT_2a. Reasoning / Causal Analysis"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "renewable": (
        "Climate Change: Renewable Energy",
        "Low carbon electricity sources",
        ["E2. Energy Transition", "E1. Climate Policy, Governance & Finance Mechanism"],
        ["INTENT_3a. General Advice"],
        ["FORM_3a. Item List"],
    ),
    "farming": (
        "Climate Change: Agriculture",
        "Food production under a warming climate",
        ["C1. Agriculture & Food Security"],
        ["INTENT_2a. Reasoning / Causal Analysis"],
        ["FORM_2b. Detailed Multi-paragraph"],
    ),
    "harvest": (
        "Climate Change: Crop Yields",
        "Harvest outcomes under warming",
        ["C1. Agriculture & Food Security", "C2. Water Resources & Hydrological Impacts"],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_1b. Brief Statement"],
    ),
    "flood": (
        "Climate Change: Flooding",
        "Flood risk and damages",
        ["A4. Extreme Weather Events", "C5. Urban Systems & Infrastructure Impacts"],
        ["INTENT_2a. Reasoning / Causal Analysis"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "heat wave": (
        "Climate Change: Heat Waves",
        "Extreme heat events and their toll",
        ["A4. Extreme Weather Events"],
        ["INTENT_1c. Clarification / Verification"],
        ["FORM_1b. Brief Statement"],
    ),
    "carbon tax": (
        "Climate Change: Carbon Pricing",
        "Taxing or trading emissions",
        ["E1. Climate Policy, Governance & Finance Mechanism"],
        ["INTENT_1b. Concept Definition"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "legislation": (
        "Climate Change: Policy",
        "Government climate action and law",
        ["E1. Climate Policy, Governance & Finance Mechanism"],
        ["INTENT_2c. Evaluation / Review"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "sea level": (
        "Climate Change: Sea-Level Rise",
        "Rising oceans and coastal exposure",
        ["A3. Oceans, Cryosphere & Sea-Level Change"],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_1a. Concise Value(s) / Entity(ies)"],
    ),
    "disease": (
        "Climate Change: Public Health",
        "Health risks of a warming world",
        ["C3. Human Health & Well-being", "D3. Public Health Adaptation"],
        ["INTENT_3a. General Advice"],
        ["FORM_3a. Item List"],
    ),
    "commute": (
        "Climate Change: Transport",
        "Mobility emissions and alternatives",
        ["E5. Transport & Building Emissions Reduction"],
        ["INTENT_6a. Operational Writing"],
        ["FORM_6a. Email / Letter"],
    ),
    "simulation": (
        "Climate Change: Climate Modeling",
        "Simulating the climate system",
        ["A5. Climate Modeling"],
        ["INTENT_2b. Data Analysis / Calculation"],
        ["FORM_4a. Tabular Data"],
    ),
    "species": (
        "Climate Change: Biodiversity",
        "Species decline under climate stress",
        ["B1. Biodiversity Loss"],
        ["INTENT_2a. Reasoning / Causal Analysis"],
        ["FORM_2b. Detailed Multi-paragraph"],
    ),
    "coral": (
        "Climate Change: Coral Reefs",
        "Reef ecosystems in warming seas",
        ["B3. Marine & Coastal Ecosystem Changes"],
        ["INTENT_2a. Reasoning / Causal Analysis"],
        ["FORM_2a. Concise Paragraph"],
    ),
    "insulation": (
        "Climate Change: Building Efficiency",
        "Cutting energy use in buildings",
        ["E5. Transport & Building Emissions Reduction", "E2. Energy Transition"],
        ["INTENT_3b. Technical Assistance / Troubleshooting"],
        ["FORM_2c. Step-by-step Explanation"],
    ),
    "awareness": (
        "Climate Change: Public Awareness",
        "How people learn and talk about climate",
        ["D4. Public Awareness, Communication & Community Engagement"],
        ["INTENT_3c. Planning / Strategy"],
        ["FORM_3a. Item List"],
    ),
    "monitoring": (
        "Climate Change: Environmental Monitoring",
        "Observing and measuring climate signals",
        ["A6. Environmental Monitoring"],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_2a. Concise Paragraph"],
    ),
}

# special per-text judgements for the worked examples
SPECIALS = {
    R454C: (
        ("Climate Change: Refrigerants", "Warming impact of refrigerant gases"),
        ["A2. Greenhouse Gas & Biogeochemical Cycles"],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_1a. Concise Value(s) / Entity(ies)"],
    ),
    WATER_MCQ: (
        ("Climate Change: Water Management", "Managing water under climate stress"),
        [
            "C2. Water Resources & Hydrological Impacts",
            "D5. Natural Resource Management & Conservation",
        ],
        ["INTENT_1a. Fact Lookup"],
        ["FORM_7a. Multiple Choice"],
    ),
    REDDIT_WINTER: (
        ("Climate Change: Temperature Trends", "Perceived warming in daily life"),
        ["A4. Extreme Weather Events"],
        [
            "INTENT_2a. Reasoning / Causal Analysis",
            "INTENT_1c. Clarification / Verification",
        ],
        ["FORM_2a. Concise Paragraph", "FORM_3a. Item List"],
    ),
}

OFF_TOPIC = ("pasta recipe", "workout plan", "pizza in Austin")

MERGE_GROUPS = [
    (
        {"Climate Change: Solar Power", "Climate Change: Wind Power", "Climate Change: Renewable Energy"},
        ("Climate Change: Renewable Energy", "Low carbon electricity sources"),
    ),
    (
        {"Climate Change: Agriculture", "Climate Change: Crop Yields"},
        ("Climate Change: Agriculture", "Food production under climate change"),
    ),
    (
        {"Climate Change: Flooding", "Climate Change: Heat Waves"},
        ("Climate Change: Extreme Weather", "Damaging rare weather events"),
    ),
    (
        {"Climate Change: Policy", "Climate Change: Carbon Pricing"},
        ("Climate Change: Policy", "Public climate governance and pricing"),
    ),
]

CHATLOG_TEXTS = [
    R454C,
    WATER_MCQ,
    "How much solar capacity does Spain need to retire its coal plants?",
    "Explain why a wind turbine's output varies so much week to week.",
    "Give me three arguments for renewable subsidies I can use in a debate.",
    "How is farming in the Sahel adapting to shorter rainy seasons?",
    "Did last year's drought reduce the wheat harvest in Kansas?",
    "Why does urban flood damage keep rising even where rainfall is stable?",
    "Was the 2022 Indian heat wave made more likely by warming?",
    "Define a carbon tax and how it differs from cap and trade.",
    "Draft talking points on new climate legislation for a town hall.",
    "How many millimeters of sea level rise came from Greenland since 2000?",
    "What disease risks grow as mosquito ranges expand?",
    "Write an email convincing my company to subsidize a bike commute.",
    "Run a simulation argument: how do models attribute single events?",
    "Which species are most exposed to climate-driven habitat loss?",
    "Can coral reefs recover if bleaching happens every other year?",
    "What insulation upgrades cut home heating emissions fastest?",
    "What's a good pasta recipe for date night?",
    "Design me a beginner workout plan for three days a week.",
]

FORUMQ_TEXTS = [
    REDDIT_WINTER,
    "Anyone know good pizza in Austin?",
    "Is rooftop solar still worth it at today's prices?",
    "Do wind turbine farms actually change local weather?",
    "What renewable source scales fastest for a small nation?",
    "Is regenerative farming hype or does it bank carbon?",
    "Why was this year's apple harvest so bad across the northeast?",
    "Our street now floods twice a year. Is this the new normal?",
    "How deadly was the last European heat wave compared to 2003?",
    "Would a carbon tax actually change corporate behavior?",
    "Which country has the strongest climate legislation right now?",
    "How fast is sea level rise accelerating on the US east coast?",
    "Is dengue spreading north because of warming, or travel, or both? A disease question.",
    "Should my city ban gas cars from the commute core by 2030?",
    "How trustworthy is a climate simulation of rainfall at city scale?",
    "Which bird species have already shifted their ranges poleward?",
    "Are coral nurseries working anywhere at scale?",
    "Does attic insulation really pay back in two winters?",
    "How do we raise climate awareness without doom fatigue?",
    "Is rooftop solar still worth it at today's prices?",
]

REPORTS_TEXTS = [
    "Observed warming has increased the frequency of compound flood events in coastal cities, with attribution studies pointing to sea level rise as the dominant driver.",
    "Solar photovoltaic deployment doubled over the assessment period, making renewable generation the largest source of new capacity.",
    "Wind turbine installations on the northern plateau now supply a fifth of regional demand, though grid integration remains the binding constraint.",
    "Renewable portfolio standards, where adopted, correlate with faster coal retirement and measurable emission declines.",
    "Smallholder farming systems show the highest sensitivity to rainfall variability, with adaptation finance lagging need.",
    "Harvest failures linked to consecutive drought years have doubled staple prices in exposed regions.",
    "Flood exposure of critical infrastructure grows faster than protective investment in most assessed basins.",
    "Heat wave mortality is concentrated among older urban residents lacking cooling access.",
    "Carbon tax schemes covering industry achieved deeper reductions than voluntary pledges over the same window.",
    "Climate legislation enacted in the last decade varies widely in enforcement mechanisms and coverage.",
    "Sea level projections under high-emission pathways exceed one meter by 2100 for several gauge sites.",
    "Vector-borne disease ranges expand poleward, placing new populations at risk.",
    "Commute electrification combined with modal shift delivers the largest transport emission cuts in scenario analysis.",
    "Earth system simulation ensembles narrow the uncertainty in equilibrium warming only modestly.",
    "Species range shifts are now documented across all assessed taxonomic groups.",
    "Coral reef systems face near-annual bleaching conditions under two degrees of warming.",
    "Building insulation retrofits remain the most cost-effective demand-side mitigation measure.",
    "Public awareness campaigns improve policy support most when paired with local adaptation examples.",
    "Monitoring networks for greenhouse gases remain sparse across the southern hemisphere.",
    "Upgrading environmental monitoring of ice sheets would halve the detection lag for dynamic loss.",
]


def theme_for(text: str):
    lower = text.lower()
    for key, payload in THEMES.items():
        if key in lower:
            return payload
    return None


class RuleJudge(MockBackend):
    """Deterministic judge used only to author fixtures; records every reply."""

    def __init__(self, embedding_dim: int):
        super().__init__(fixtures={}, embedding_dim=embedding_dim)
        self.recorded: dict[str, str] = {}

    def complete(self, prompt, request, model):
        reply = self._reply(request)
        self.recorded[prompt_hash(prompt)] = reply
        return reply

    def _reply(self, request) -> str:
        tid = request.template_id
        if tid == "relevance_filter":
            text = request.variables["text"]
            return "no" if any(marker in text for marker in OFF_TOPIC) else "yes"
        if tid == "initial_topic_generation":
            text = request.variables["text"]
            if any(marker in text for marker in OFF_TOPIC):
                return '[{"topic":"Irrelevant Data","explanation":"None"}]'
            if text in SPECIALS:
                label, explanation = SPECIALS[text][0]
                return json.dumps([{"topic": label, "explanation": explanation}])
            payload = theme_for(text)
            if payload is None:
                return json.dumps(
                    [{"topic": "Climate Change: General", "explanation": "Broad climate discussion"}]
                )
            return json.dumps([{"topic": payload[0], "explanation": payload[1]}])
        if tid == "topic_merging":
            items = json.loads(request.variables["items"])
            anchor = items[0]
            for members, (parent, explanation) in MERGE_GROUPS:
                if anchor["topic"] in members:
                    ids = [i["id"] for i in items[1:] if i["topic"] in members]
                    if ids:
                        return json.dumps(
                            {
                                "merged_ids": ids,
                                "parent_topic": parent,
                                "parent_explanation": explanation,
                            }
                        )
                    break
            return json.dumps(
                {
                    "merged_ids": [],
                    "parent_topic": anchor["topic"],
                    "parent_explanation": anchor["explanation"],
                }
            )
        if tid == "topic_reassignment":
            text = request.variables["text"]
            if text in SPECIALS:
                labels = SPECIALS[text][1]
            else:
                payload = theme_for(text)
                labels = payload[2] if payload else ["F1. Others"]
            return json.dumps([{"topic": label} for label in labels])
        if tid == "question_type_classification":
            text = request.variables["text"]
            if text in SPECIALS:
                intents, forms = SPECIALS[text][2], SPECIALS[text][3]
            else:
                payload = theme_for(text)
                if payload is None:
                    intents, forms = ["INTENT_9z. Others"], ["FORM_9z. Others"]
                else:
                    intents, forms = payload[3], payload[4]
            return json.dumps({"intent": intents, "form": forms})
        raise AssertionError(f"unexpected template {tid}")


CONFIG = {
    "subject": "Climate Change",
    "n": 4,
    "m": 20,
    "seed": 20240801,
    "datasets": [
        {
            "dataset_id": "chatlogs",
            "display_name": "Chat Logs",
            "category": "human_to_ai_query",
            "path": "corpus/chatlogs.jsonl",
            "format": "jsonl_conversation",
            "filter_relevance": True,
        },
        {
            "dataset_id": "forumq",
            "display_name": "Forum Questions",
            "category": "human_to_human_question",
            "path": "corpus/forumq.jsonl",
            "format": "jsonl_text_field",
        },
        {
            "dataset_id": "reports",
            "display_name": "Assessment Reports",
            "category": "human_to_human_provision",
            "path": "corpus/reports.jsonl",
            "format": "jsonl_text_field",
            "fixed_intents": ["INTENT_9z"],
            "fixed_forms": ["FORM_9z"],
        },
    ],
    "gateway": {
        "backend": "mock",
        "fixtures_path": "fixtures.json",
        "embedding_dim": 24,
        "concurrency": 1,
        "models": {"default": "rule-judge"},
    },
    "merge": {"batch_size": 10},
    "analysis": {
        "groups": {"asking": ["chatlogs", "forumq"]},
        "divergence_pairs": [["chatlogs", "forumq"], ["chatlogs", "reports"], ["asking", "reports"]],
        "divergence_top_n": 10,
        "cross": [["topic", "intent"], ["intent", "form"]],
    },
    "agreement": {
        "file_a": "agreement/annotator_a.jsonl",
        "file_b": "agreement/annotator_b.jsonl",
        "universe": "agreement/universe.json",
        "dimension": "topic",
        "rounds": 1000,
        "level": 0.95,
    },
}

AGREEMENT_PAIRS = [
    ("g01", ["A1"], ["A1"], "1-6"),
    ("g02", ["A4", "C3"], ["A4"], "1-6"),
    ("g03", ["E1"], ["E1", "E2"], "1-6"),
    ("g04", ["B1"], ["B1"], "1-6"),
    ("g05", ["C2", "D5"], ["C2", "D5"], "1-6"),
    ("g06", ["A5"], ["A6"], "1-6"),
    ("g07", ["E2"], ["E2"], "7-12"),
    ("g08", ["D4"], ["D4", "E1"], "7-12"),
    ("g09", ["C1"], ["C1"], "7-12"),
    ("g10", ["A2", "A1"], ["A2"], "7-12"),
    ("g11", ["F1"], ["F1"], "7-12"),
    ("g12", ["B3"], ["B2"], "7-12"),
]


def write_inputs(out: Path) -> None:
    corpus = out / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    with (corpus / "chatlogs.jsonl").open("w", encoding="utf-8") as fp:
        for i, text in enumerate(CHATLOG_TEXTS):
            turns = [{"role": "user", "content": text}]
            if i % 2 == 0:
                turns.append({"role": "assistant", "content": "Let me think about that."})
            fp.write(json.dumps({"turns": turns, "conv_id": f"c{i:03d}"}, ensure_ascii=False) + "\n")
    with (corpus / "forumq.jsonl").open("w", encoding="utf-8") as fp:
        for i, text in enumerate(FORUMQ_TEXTS):
            fp.write(json.dumps({"text": text, "post_id": f"p{i:03d}"}, ensure_ascii=False) + "\n")
    with (corpus / "reports.jsonl").open("w", encoding="utf-8") as fp:
        for i, text in enumerate(REPORTS_TEXTS):
            fp.write(json.dumps({"text": text, "para_id": f"r{i:03d}"}, ensure_ascii=False) + "\n")

    agreement = out / "agreement"
    agreement.mkdir(parents=True, exist_ok=True)
    with (agreement / "annotator_a.jsonl").open("w", encoding="utf-8") as fp:
        for sid, a, _, seg in AGREEMENT_PAIRS:
            fp.write(json.dumps({"sample_id": sid, "labels": a, "segment": seg}) + "\n")
    with (agreement / "annotator_b.jsonl").open("w", encoding="utf-8") as fp:
        for sid, _, b, seg in AGREEMENT_PAIRS:
            fp.write(json.dumps({"sample_id": sid, "labels": b, "segment": seg}) + "\n")
    from taxalign.taxonomy import TopicTaxonomy

    universe = TopicTaxonomy.load().codes(include_others=True)
    (agreement / "universe.json").write_text(json.dumps(universe) + "\n", encoding="utf-8")

    (out / "config.json").write_text(
        json.dumps(CONFIG, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def run_pipeline(config_path: Path, workdir: Path, backend=None) -> Pipeline:
    config = PipelineConfig.load(config_path)
    pipeline = Pipeline(config, workdir, backend=backend)
    for report in pipeline.run_all():
        status = report.get("status")
        assert status in ("ok", "skipped", "no-op"), report
    return pipeline


def audit(pipeline: Pipeline) -> None:
    from taxalign.merging import MergeTree

    expectations = {
        R454C: (["A2"], ["INTENT_1a"], ["FORM_1a"]),
        WATER_MCQ: (["C2", "D5"], ["INTENT_1a"], ["FORM_7a"]),
        REDDIT_WINTER: (["A4"], ["INTENT_2a", "INTENT_1c"], ["FORM_2a", "FORM_3a"]),
    }
    found = 0
    for ds in ("chatlogs", "forumq"):
        for sample in pipeline.store.samples(ds):
            if sample.text in expectations:
                topics, intents, forms = expectations[sample.text]
                ann = sample.annotations or {}
                assert ann.get("topics") == topics, (sample.text[:40], ann)
                assert ann.get("intents") == intents, ann
                assert ann.get("forms") == forms, ann
                found += 1
    assert found == 3, f"expected the 3 worked examples annotated, found {found}"

    tree = MergeTree.from_dict(
        json.loads((pipeline.workdir / "merge" / "merge_tree.json").read_text())
    )
    tree.validate()
    merges = [m for rl in tree.round_logs for m in rl.merges]
    assert merges, "golden run should contain at least one real merge"
    reports = [s.annotations for s in pipeline.store.samples("reports")]
    assert all(a and a["intents"] == ["INTENT_9z"] for a in reports)
    print(f"audit ok: worked examples stored, {len(merges)} merges, tree valid")


def bundle_bytes(workdir: Path) -> dict[str, bytes]:
    bundle = workdir / "bundle"
    return {p.name: p.read_bytes() for p in sorted(bundle.iterdir())}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(REPO / "tests" / "data" / "golden"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    write_inputs(out)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        judge = RuleJudge(embedding_dim=CONFIG["gateway"]["embedding_dim"])
        recording = run_pipeline(out / "config.json", tmp / "record", backend=judge)
        audit(recording)
        fixtures = json.dumps(judge.recorded, sort_keys=True, indent=0) + "\n"
        (out / "fixtures.json").write_text(fixtures, encoding="utf-8")
        print(f"recorded {len(judge.recorded)} judge replies")

        replay = run_pipeline(out / "config.json", tmp / "replay")
        audit(replay)
        recorded_bundle = bundle_bytes(tmp / "record")
        replay_bundle = bundle_bytes(tmp / "replay")
        assert recorded_bundle == replay_bundle, "replay bundle diverged from recording"

        golden_dir = out / "bundle"
        if golden_dir.exists():
            shutil.rmtree(golden_dir)
        golden_dir.mkdir()
        for name, data in replay_bundle.items():
            (golden_dir / name).write_bytes(data)
        print(f"golden bundle written: {sorted(replay_bundle)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
