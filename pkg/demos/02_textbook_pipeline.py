#!/usr/bin/env python3
"""Textbook markdown to training material: scrub, chunk, mine captions.

Run: python3 demos/02_textbook_pipeline.py
"""
from dudp.ingest import (TextbookDoc, chunk_markdown, extract_caption_pairs,
                         scrub_nonsubstantive)

book = TextbookDoc(
    doc_id="ultrasound-primer",
    markdown=(
        "Copyright © 2020 Demo Press. All rights reserved.\n"
        "\n"
        "# Abdominal Ultrasound\n"
        "## The Liver\n"
        "Normal parenchyma is homogeneous and mildly hyperechoic relative to\n"
        "the renal cortex. Simple cysts are anechoic with posterior\n"
        "acoustic enhancement.\n"
        "\n"
        "![liver case](fig_liver)\n"
        "Figure 1.1: Simple hepatic cyst with enhancement\n"
        "\n"
        "42\n"
        "## The Kidney\n"
        "Corticomedullary differentiation should be preserved.\n"
        "![kidney a](fig_kid_a)\n"
        "![kidney b](fig_kid_b)\n"
        "Figure 1.2: Longitudinal and transverse renal views\n"
    ),
    image_assets={"fig_liver": "assets/liver.png", "fig_kid_a": "assets/kid_a.png",
                  "fig_kid_b": "assets/kid_b.png"},
)

# Front matter and page-margin artifacts go; body lines stay byte-identical.
clean = scrub_nonsubstantive(book)
print("scrubbed away:", len(book.markdown) - len(clean.markdown), "chars")
assert "Copyright" not in clean.markdown and "\n42\n" not in clean.markdown

# Chunks split at headings first and always concatenate back to the source.
chunks = chunk_markdown(clean, max_chars=2048)
for chunk in chunks:
    print(f"chunk {chunk.chunk_index}: {' > '.join(chunk.heading_path) or '(preamble)'}"
          f" [{len(chunk.text)} chars]")
assert "".join(c.text for c in chunks) == clean.markdown

# Figure blocks pair with their adjacent caption; multi-image figures share one.
pairs, unmatched = extract_caption_pairs(clean)
for pair in pairs:
    print(f"caption: {pair.caption!r} <- {len(pair.images)} image(s)")
print("caption-less images:", len(unmatched))
