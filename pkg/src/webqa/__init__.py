"""Few-shot question answering conditioned on web search evidence.

Retrieve documents for a question, chunk and rank them, prompt a language
model with the best paragraphs, sample candidate answers, and rerank the
candidates with probabilities computed by prompting the same model.
"""

__version__ = "0.1.0"
