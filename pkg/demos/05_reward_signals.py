#!/usr/bin/env python3
"""Verifiable rewards for reinforcement refinement.

Two independent binary components per rollout (format and outcome), then
group-relative advantages over each prompt's rollout group.

Run: python3 demos/05_reward_signals.py
"""
from dudp.qagen import QaPair
from dudp.rewards import (FormatSpec, RewardConfig, extract_answer, format_reward,
                          group_advantages, outcome_reward, reward_batch)

spec = FormatSpec(require_think_block=True, answer_pattern="mcq_letter")
gold = QaPair(qa_id="q1", record_id="r1",
              question="Which diagnosis fits?\nA. cyst\nB. hemangioma\nC. normal\nD. abscess",
              answer="hemangioma", answer_form="mcq",
              choices={"A": "cyst", "B": "hemangioma", "C": "normal", "D": "abscess"},
              correct_choice="B", gold_label="hemangioma")

rollouts = [
    "<think>Well-defined, hyperechoic: classic hemangioma.</think>\nAnswer: B",
    "<think>Anechoic, thin walls.</think>\nAnswer: A",
    "B",                                # right answer, missing think block
    "The image is non-diagnostic.",     # nothing to extract
]
for text in rollouts:
    fmt = format_reward(text, spec)
    try:
        outcome = outcome_reward(extract_answer(text, spec), gold)
    except Exception:
        outcome = 0.0
    print(f"format={fmt} outcome={outcome}  <- {text[:48]!r}")

# Outcome is independent of formatting: rollout 3 earned outcome 1.0 with
# format 0.0. The gated ablation (both zero unless formatted) is available
# via RewardConfig(gate_outcome_on_format=True).

# Numeric answers compare within relative tolerance after unit conversion.
num_spec = FormatSpec(require_think_block=False, answer_pattern="numeric_with_unit")
gold_num = QaPair(qa_id="q2", record_id="r2", question="Femur length?",
                  answer="5.2 cm", answer_form="numeric", gold_label="5.2 cm")
for text in ("5.25 cm", "52 mm", "4.9 cm"):
    parsed = extract_answer(text, num_spec)
    print(f"{text!r} -> outcome {outcome_reward(parsed, gold_num, tolerance=0.02)}")

# Advantages standardize totals within one prompt's group.
print("advantages [1,0,1,0] ->", group_advantages([1.0, 0.0, 1.0, 0.0]))

batch = [{"qa_id": "q1", "rollout_index": i, "output_text": t}
         for i, t in enumerate(rollouts)]
for signal in reward_batch(batch, {"q1": gold}, RewardConfig(spec=spec)):
    print(signal)
