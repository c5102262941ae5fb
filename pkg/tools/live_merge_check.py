#!/usr/bin/env python3
"""Optional live-mode check: merge a 500-topic synthetic pool with a real
judge and embedder, and report the reduction.

This is the qualitative, model-dependent analogue of the published shrink
rates; it is documented but deliberately not part of CI. Usage:

    python3 tools/live_merge_check.py --gateway-config my_gateway.json

The gateway config is the same JSON object the pipeline's "gateway" section
uses (backend, base_url, models, temperatures, ...). The auth token is read
from the environment variable named by `api_key_env`.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from taxalign.gateway import GatewayConfig, ModelGateway  # noqa: E402
from taxalign.merging import MergeEngine  # noqa: E402
from taxalign.mining import TopicEntry, collapse_duplicates  # noqa: E402

BASE_CONCEPTS = [
    ("Renewable Energy", ["Solar Power", "Wind Power", "Clean Energy", "Green Electricity", "Renewables"]),
    ("Extreme Weather", ["Heat Waves", "Heatwaves", "Severe Storms", "Extreme Heat", "Weather Extremes"]),
    ("Sea-Level Rise", ["Rising Seas", "Coastal Flooding", "Ocean Rise", "Sea Level Change"]),
    ("Agriculture", ["Farming", "Crop Production", "Food Production", "Agricultural Yields"]),
    ("Climate Policy", ["Climate Governance", "Climate Regulation", "Climate Law", "Policy & Governance"]),
    ("Carbon Pricing", ["Carbon Tax", "Emission Trading", "Carbon Markets", "Cap and Trade"]),
    ("Public Health", ["Health Impacts", "Human Health", "Health Risks", "Disease Spread"]),
    ("Biodiversity Loss", ["Species Decline", "Habitat Loss", "Wildlife Decline", "Extinction Risk"]),
    ("Ocean Warming", ["Marine Heating", "Sea Warming", "Warming Oceans"]),
    ("Climate Modeling", ["Climate Simulation", "Model Projections", "Climate Models"]),
    ("Urban Adaptation", ["City Resilience", "Urban Planning", "Resilient Cities"]),
    ("Deforestation", ["Forest Loss", "Logging Impacts", "Tree Cover Loss"]),
    ("Glacier Retreat", ["Melting Glaciers", "Ice Loss", "Cryosphere Decline"]),
    ("Energy Efficiency", ["Efficient Buildings", "Energy Savings", "Demand Reduction"]),
    ("Transport Emissions", ["Vehicle Emissions", "Traffic Pollution", "Mobility Emissions"]),
    ("Water Scarcity", ["Drought Risk", "Water Stress", "Water Shortage"]),
    ("Wildfires", ["Forest Fires", "Bushfires", "Fire Risk"]),
    ("Permafrost Thaw", ["Thawing Permafrost", "Frozen Ground Loss"]),
    ("Climate Finance", ["Green Investment", "Climate Funding", "Adaptation Finance"]),
    ("Air Quality", ["Air Pollution", "Smog", "Particulate Pollution"]),
]


def synthetic_topics(gateway: ModelGateway, n: int) -> list[TopicEntry]:
    import numpy as np

    labels = []
    i = 0
    while len(labels) < n:
        base, variants = BASE_CONCEPTS[i % len(BASE_CONCEPTS)]
        pick = ([base] + variants)[(i // len(BASE_CONCEPTS)) % (len(variants) + 1)]
        labels.append(
            (
                f"Climate Change: {pick}",
                f"Aspect {i % 7} of {base.lower()} under climate change.",
            )
        )
        i += 1
    texts = [f"{label}. {expl}" for label, expl in labels]
    vectors = gateway.embed_batch(texts)
    rng = np.random.default_rng(0)
    entries = [
        TopicEntry(label=l, explanation=e, count=int(rng.integers(1, 40)), embedding=v)
        for (l, e), v in zip(labels, vectors)
    ]
    return collapse_duplicates(entries)


def run_check(gateway_config_path: str, topic_count: int = 500) -> dict:
    raw = json.loads(Path(gateway_config_path).read_text(encoding="utf-8"))
    config = GatewayConfig.from_dict(raw, base_dir=Path(gateway_config_path).parent)
    gateway = ModelGateway(config)
    topics = synthetic_topics(gateway, topic_count)
    engine = MergeEngine(gateway)
    final, tree = engine.run(topics)
    result = {
        "initial_topics": len(topics),
        "final_topics": len(final),
        "rounds": len(tree.round_logs),
        "stop_reason": tree.round_logs[-1].stop_reason if tree.round_logs else "single_topic",
        "reduction": 1 - len(final) / max(1, len(topics)),
    }
    return result


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--gateway-config", required=True)
    parser.add_argument("--topics", type=int, default=500)
    args = parser.parse_args()
    result = run_check(args.gateway_config, args.topics)
    print(json.dumps(result, indent=2))
    if result["final_topics"] > result["initial_topics"] * 0.5:
        print("FAIL: reduction below 50%", file=sys.stderr)
        return 1
    print("PASS: reduction of at least 50% with convergence", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
