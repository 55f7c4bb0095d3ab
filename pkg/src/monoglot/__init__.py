"""monoglot: a desk-scale toolkit for building a monolingual language model
for a low-resource language.

Pipeline: corpus merging/cleaning -> WordPiece tokenizer training -> masked
language-model pretraining of a compact transformer encoder -> fine-tuning
for binary / multi-class / multi-label classification -> evaluation reports.
A dual-annotator labeling service produces the fine-tuning datasets.
"""

__version__ = "0.1.0"
